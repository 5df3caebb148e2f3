use std::io::Write;

use smec_core::optimizer::{solve, Solution, Strategy};
use smec_core::scenario::{builtin, ScenarioConfig};
use smec_core::ProblemInstance;

pub fn report(criterion: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "\ncriterion {criterion}: {verdict} {detail}");
}

pub fn config(name: &str) -> ScenarioConfig {
    builtin(name).unwrap_or_else(|| panic!("missing builtin {name}")).config
}

pub fn run(cfg: &ScenarioConfig, strategy: Strategy) -> (ProblemInstance, Solution) {
    let p = cfg.problem().expect("valid scenario");
    let s = solve(&p, strategy, &cfg.optimizer);
    (p, s)
}

pub fn with_width(cfg: &ScenarioConfig, w: u32) -> ScenarioConfig {
    let mut c = cfg.clone();
    for x in c.task.frame_widths.iter_mut() {
        *x = w;
    }
    c
}

/// Raw frame bits over what one slot at the frame's rate can carry.
pub fn rho_floor(p: &ProblemInstance, k: usize) -> f64 {
    p.demands[k] / (p.slot_len_s * p.snapshots[k].rate_bps)
}
