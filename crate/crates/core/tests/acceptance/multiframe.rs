use smec_core::optimizer::{solve, Strategy};
use smec_core::scenario::SweepParam;

use crate::common::{config, report, run};

fn per_image(name: &str, frames: u32) -> Option<f64> {
    let cfg = SweepParam::Frames.apply(&config(name), f64::from(frames)).unwrap();
    let (p, s) = run(&cfg, Strategy::Global);
    if s.feasible() {
        s.plan.energy_per_image(&p)
    } else {
        None
    }
}

fn reduction(name: &str) -> Option<f64> {
    Some(100.0 * (1.0 - per_image(name, 5)? / per_image(name, 1)?))
}

#[test]
fn criterion_6_empty_frame_savings() {
    let v0 = reduction("empty-v0-w20");
    let v5 = reduction("empty-v5-w20");
    let within = |r: Option<f64>, target: f64| r.is_some_and(|r| (r - target).abs() <= 5.0);
    let pass = within(v0, 90.0) && within(v5, 56.0);
    let show = |r: Option<f64>| r.map_or("infeasible".to_string(), |r| format!("{r:.1}%"));
    report(
        "6",
        pass,
        &format!(
            "(K=5 vs K=1 per-image reduction v0 {}, target 90 ± 5; v5 {}, target 56 ± 5)",
            show(v0),
            show(v5)
        ),
    );
    assert!(pass);
}

struct PassResult {
    global_ok: bool,
    baselines_infeasible: bool,
    saving: Option<f64>,
}

fn lapalma(name: &str) -> PassResult {
    let cfg = config(name);
    let (p, global) = run(&cfg, Strategy::Global);
    let direct = solve(&p, Strategy::Direct, &cfg.optimizer);
    let local = solve(&p, Strategy::Local, &cfg.optimizer);
    let mut per_frame = 0.0;
    let mut per_frame_ok = true;
    for k in 0..p.k() {
        let (_, s) = run(&cfg.single_frame(k).unwrap(), Strategy::Global);
        per_frame_ok &= s.feasible();
        per_frame += s.plan.total_energy();
    }
    let saving = (global.feasible() && per_frame_ok && per_frame > 0.0)
        .then(|| 100.0 * (1.0 - global.plan.total_energy() / per_frame));
    PassResult {
        global_ok: global.feasible(),
        baselines_infeasible: !direct.feasible() && !local.feasible(),
        saving,
    }
}

#[test]
fn criterion_7_lapalma_pass() {
    let a = lapalma("lapalma");
    let b = lapalma("lapalma-eta0.1");
    let in_band = |s: Option<f64>| s.is_some_and(|s| (5.0..=15.0).contains(&s));
    let qualitative = a.global_ok && b.global_ok && a.baselines_infeasible && b.baselines_infeasible;
    let pass = qualitative && in_band(a.saving) && in_band(b.saving);
    let show = |s: Option<f64>| s.map_or("n/a".to_string(), |s| format!("{s:.1}%"));
    report(
        "7",
        pass,
        &format!(
            "(global feasible, direct and local infeasible: {qualitative}; multi-frame saving eta=1 {}, eta=0.1 {}, target 5-15%)",
            show(a.saving),
            show(b.saving)
        ),
    );
    assert!(pass);
}
