use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smec_core::optimizer::oracle::{oracle_grid_search, GridSpec};
use smec_core::optimizer::{bcd_solve, OptimizerError};
use smec_core::scenario::TopologyMode;
use smec_core::{check_feasibility, ScenarioConfig};

use crate::common::report;

fn instance(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    let k = rng.gen_range(1..=2usize);
    let n = if k == 1 {
        rng.gen_range(1..=3)
    } else {
        rng.gen_range(1..=2)
    };
    cfg.constellation.n_sats = n;
    cfg.task.frame_widths = (0..k).map(|_| rng.gen_range(0..=12)).collect();
    if n > 1 && rng.gen_bool(0.5) {
        cfg.topology.mode = TopologyMode::VdOffset;
        cfg.topology.dest_offset_hops = rng.gen_range(1..n);
    }
    cfg.link.isl_tx_fraction = rng.gen_range(0.1..=1.0);
    cfg.compute.epsilon = rng.gen_range(0.05..0.2);
    cfg.validate().unwrap();
    cfg
}

#[test]
fn criterion_8_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut feasible = 0;
    for i in 0..20 {
        let cfg = instance(&mut rng);
        let p = cfg.problem().unwrap();
        let tau = cfg.optimizer.tau_proc;
        let bcd = bcd_solve(&p, &cfg.optimizer);
        let grid = oracle_grid_search(&p, GridSpec::for_frames(p.k()), tau);
        let bcd_ok = bcd.feasible();
        if bcd_ok {
            let plan = &bcd.plan;
            if !check_feasibility(&plan.x, &plan.rho, &plan.freq, &p, tau).feasible() {
                failures.push(format!("#{i} descent plan fails the feasibility check"));
            }
        }
        match grid {
            Ok(g) => {
                feasible += 1;
                if !check_feasibility(&g.x, &g.rho, &g.freq, &p, tau).feasible() {
                    failures.push(format!("#{i} grid plan fails the feasibility check"));
                }
                if !bcd_ok {
                    failures.push(format!("#{i} descent infeasible where the grid is feasible"));
                    continue;
                }
                let ratio = bcd.plan.total_energy() / g.total_energy().max(f64::MIN_POSITIVE);
                if g.total_energy() > 0.0 {
                    worst = worst.max(ratio);
                }
                if bcd.plan.total_energy() > g.total_energy() * 1.02 {
                    failures.push(format!("#{i} descent/grid energy {ratio:.4}"));
                }
            }
            Err(OptimizerError::Infeasible { .. }) => {}
            Err(e) => failures.push(format!("#{i} {e}")),
        }
    }
    let pass = failures.is_empty();
    report(
        "8",
        pass,
        &format!(
            "(20 instances, {feasible} feasible on the grid, worst descent/grid energy {worst:.4}, target <= 1.02{}{})",
            if pass { "" } else { "; " },
            failures.join("; ")
        ),
    );
    assert!(pass);
}
