use smec_core::optimizer::Strategy;

use crate::common::{config, report, rho_floor, run, with_width};

struct Point {
    w: u32,
    feasible: bool,
    energy: f64,
    rho: f64,
    floor: f64,
}

fn sweep(name: &str, strategy: Strategy, widths: std::ops::RangeInclusive<u32>) -> Vec<Point> {
    let base = config(name);
    widths
        .map(|w| {
            let (p, s) = run(&with_width(&base, w), strategy);
            Point {
                w,
                feasible: s.feasible(),
                energy: s.plan.total_energy(),
                rho: s.plan.rho[0],
                floor: rho_floor(&p, 0),
            }
        })
        .collect()
}

/// `Some(b)` when exactly the widths `1..=b` are feasible.
fn frontier(points: &[Point]) -> Option<u32> {
    let b = points.iter().take_while(|p| p.feasible).last().map_or(0, |p| p.w);
    points.iter().all(|p| p.feasible == (p.w <= b)).then_some(b)
}

#[test]
fn criterion_3_feasibility_frontiers() {
    let cases = [
        ("direct", "sweep-v0-eta1", Strategy::Direct, 3),
        ("local", "sweep-v0-eta1", Strategy::Local, 18),
        ("global v0", "sweep-v0-eta1", Strategy::Global, 37),
        ("global v5", "sweep-v5-eta1", Strategy::Global, 36),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, name, strategy, expected) in cases {
        let f = frontier(&sweep(name, strategy, 1..=40));
        pass &= f == Some(expected);
        parts.push(format!(
            "{label} {} (target {expected})",
            f.map_or("non-contiguous".to_string(), |b| format!("W <= {b}"))
        ));
    }
    report("3", pass, &format!("({})", parts.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_4_energy_ratios() {
    let global = sweep("sweep-v0-eta1", Strategy::Global, 1..=9);
    let direct = sweep("sweep-v0-eta1", Strategy::Direct, 1..=3);
    let local = sweep("sweep-v0-eta1", Strategy::Local, 1..=9);
    let min_ratio = direct
        .iter()
        .zip(&global)
        .map(|(d, g)| d.energy / g.energy)
        .fold(f64::INFINITY, f64::min);
    let worst_gap = local
        .iter()
        .zip(&global)
        .map(|(l, g)| (l.energy - g.energy).abs() / g.energy)
        .fold(0.0, f64::max);
    let all_feasible = global.iter().chain(&direct).chain(&local).all(|p| p.feasible);
    let pass = all_feasible && min_ratio >= 5.0 && worst_gap <= 0.10;
    report(
        "4",
        pass,
        &format!(
            "(direct/global >= {min_ratio:.2} for W <= 3, target >= 5; local vs global gap <= {:.2}% for W <= 9, target <= 10%)",
            100.0 * worst_gap
        ),
    );
    assert!(pass);
}

/// First width from which the ratio tracks the single-slot downlink floor
/// within 2% over the rest of the feasible range.
fn knee(points: &[Point]) -> Option<u32> {
    let feasible: Vec<&Point> = points.iter().filter(|p| p.feasible && p.w > 0).collect();
    let on_floor = |p: &Point| (p.rho / p.floor - 1.0).abs() <= 0.02;
    let last_off = feasible.iter().rposition(|p| !on_floor(p));
    match last_off {
        None => feasible.first().map(|p| p.w),
        Some(i) => feasible.get(i + 1).map(|p| p.w),
    }
}

#[test]
fn criterion_5_compression_knee() {
    let v0 = knee(&sweep("sweep-v0-eta1", Strategy::Global, 1..=40));
    let v5 = knee(&sweep("sweep-v5-eta1", Strategy::Global, 1..=40));
    let near = |k: Option<u32>, target: u32| k.is_some_and(|k| k.abs_diff(target) <= 1);
    let pass = near(v0, 9) && near(v5, 14);
    let show = |k: Option<u32>| k.map_or("none".to_string(), |k| k.to_string());
    report(
        "5",
        pass,
        &format!(
            "(knee v0 W = {}, target 9 ± 1; knee v5 W = {}, target 14 ± 1)",
            show(v0),
            show(v5)
        ),
    );
    assert!(pass);
}
