use smec_core::linkbudget::{select_rate, RateTable};
use smec_core::orbital::gtfp;
use smec_core::ScenarioConfig;

use crate::common::report;

#[test]
fn criterion_1_ground_track_frame_period() {
    let t = gtfp(1080, 0.5, 600e3).unwrap();
    let pass = (t - 0.078).abs() <= 0.001;
    report("1", pass, &format!("(GTFP {:.4} ms, target 78 ± 1 ms)", t * 1e3));
    assert!(pass);
}

#[test]
fn criterion_2_edge_of_coverage_rate() {
    let cfg = ScenarioConfig::default();
    let table = RateTable::dvbs2x_shannon();
    let (c, _) = cfg.constellation().unwrap();
    let slot = cfg.slot_len_s().unwrap();
    let rate = select_rate(&c, cfg.task.source_sat, 0.0, slot, &cfg.link, &table);
    let eff = rate / cfg.link.bandwidth_hz;
    let target = table.index_of(4.32).expect("4.32 b/s/Hz entry");
    let pass = table.index_of(eff).is_some_and(|i| i.abs_diff(target) <= 1);
    report(
        "2",
        pass,
        &format!("(edge rate {:.4} Gbps, target 2.16 Gbps ± one table step)", rate / 1e9),
    );
    assert!(pass);
}
