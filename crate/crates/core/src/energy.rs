//! Compression complexity, processing time, transmission and processing
//! energies, the objective evaluator and the constraint checker.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::linkbudget::LinkConfig;
use crate::topology::{Edge, EdgeUsage, TopologySnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityModel {
    /// `C(ρ) = e^{ερ} - e^{ε}`.
    Exponential,
    /// `C(ρ) = ε` regardless of the ratio (JPEG-like codecs).
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeConfig {
    pub f_cpu_hz: f64,
    pub n_cores: u32,
    pub p_proc_max_w: f64,
    pub epsilon: f64,
    pub rho_max: f64,
    pub complexity_model: ComplexityModel,
}

impl Default for ComputeConfig {
    fn default() -> Self {
        Self {
            f_cpu_hz: 1.8e9,
            n_cores: 4,
            p_proc_max_w: 10.0,
            epsilon: 0.1,
            rho_max: 20.0,
            complexity_model: ComplexityModel::Exponential,
        }
    }
}

/// Cycles per input bit needed to reach compression ratio `rho`.
pub fn compression_cycles(rho: f64, eps: f64, model: ComplexityModel) -> f64 {
    match model {
        ComplexityModel::Exponential => (eps * rho).exp() - eps.exp(),
        ComplexityModel::Constant => eps,
    }
}

/// dC/dρ.
pub fn compression_cycles_slope(rho: f64, eps: f64, model: ComplexityModel) -> f64 {
    match model {
        ComplexityModel::Exponential => eps * (eps * rho).exp(),
        ComplexityModel::Constant => 0.0,
    }
}

fn cycles(rho: f64, cfg: &ComputeConfig) -> f64 {
    compression_cycles(rho, cfg.epsilon, cfg.complexity_model)
}

/// Wall time to compress `bits` at per-core frequency `f`.
pub fn processing_time(bits: f64, rho: f64, f: f64, cfg: &ComputeConfig) -> f64 {
    let work = bits * cycles(rho, cfg);
    if work == 0.0 {
        0.0
    } else if f <= 0.0 {
        f64::INFINITY
    } else {
        work / (cfg.n_cores as f64 * f)
    }
}

/// Effective switched capacitance `ν = P_proc(f_CPU) / f_CPU³`.
pub fn capacitance(cfg: &ComputeConfig) -> f64 {
    cfg.p_proc_max_w / cfg.f_cpu_hz.powi(3)
}

/// Energy of one CPU cycle at frequency `f`.
pub fn cycle_energy(f: f64, cfg: &ComputeConfig) -> f64 {
    capacitance(cfg) * f * f
}

pub fn e_proc(bits: f64, rho: f64, f: f64, cfg: &ComputeConfig) -> f64 {
    let work = bits * cycles(rho, cfg);
    if work == 0.0 {
        0.0
    } else {
        work * cycle_energy(f, cfg)
    }
}

/// Energy per bit over the RF downlink; infinite without a link.
pub fn rf_energy_per_bit(rate_bps: f64, link: &LinkConfig) -> f64 {
    if rate_bps > 0.0 {
        link.amp_inefficiency_rf * link.tx_power_rf_w / rate_bps
    } else {
        f64::INFINITY
    }
}

/// Energy per bit per ISL hop.
pub fn isl_energy_per_bit(link: &LinkConfig) -> f64 {
    link.isl_tx_fraction * link.isl_power_w / link.isl_rate_bps
}

pub fn e_rf_trans(bits: f64, rate_bps: f64, link: &LinkConfig) -> f64 {
    if bits == 0.0 {
        0.0
    } else {
        bits * rf_energy_per_bit(rate_bps, link)
    }
}

pub fn e_isl_trans(bits: f64, link: &LinkConfig) -> f64 {
    bits * isl_energy_per_bit(link)
}

/// Scatter energy of one frame. `x_row` holds the satellite shares followed
/// by the direct-download share.
pub fn e_scatter(x_row: ArrayView1<f64>, topo: &TopologySnapshot, link: &LinkConfig) -> f64 {
    let n = topo.n_sats;
    let xg = x_row[n];
    let relay: f64 =
        (0..n).map(|v| topo.hops_src_to(v) as f64 * x_row[v]).sum::<f64>() + (topo.hops_src_to_gs() - 1) as f64 * xg;
    e_rf_trans(xg, topo.rate_bps, link) + isl_energy_per_bit(link) * relay
}

/// Gather energy of one frame: compressed segments travel to the ground.
pub fn e_gather(x_row: ArrayView1<f64>, rho: f64, topo: &TopologySnapshot, link: &LinkConfig) -> f64 {
    let a = rf_energy_per_bit(topo.rate_bps, link);
    let b = isl_energy_per_bit(link);
    let mut sum = 0.0;
    for v in 0..topo.n_sats {
        let x = x_row[v];
        if x != 0.0 {
            sum += x * (a + b * (topo.hops_to_gs(v) - 1) as f64);
        }
    }
    sum / rho
}

/// A fully specified planning problem: per-slot topology plus parameters.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub snapshots: Vec<TopologySnapshot>,
    /// Bits per frame.
    pub demands: Vec<f64>,
    pub widths: Vec<u32>,
    pub slot_len_s: f64,
    pub compute: ComputeConfig,
    pub link: LinkConfig,
    pub isl_edges: Vec<Edge>,
    usage: Vec<Vec<EdgeUsage>>,
}

impl ProblemInstance {
    pub fn new(
        snapshots: Vec<TopologySnapshot>,
        widths: Vec<u32>,
        image_bits: f64,
        slot_len_s: f64,
        compute: ComputeConfig,
        link: LinkConfig,
        isl_edges: Vec<Edge>,
    ) -> Self {
        assert_eq!(snapshots.len(), widths.len());
        assert!(!widths.is_empty());
        let demands = widths.iter().map(|&w| w as f64 * image_bits).collect();
        let usage = isl_edges
            .iter()
            .map(|&e| snapshots.iter().map(|s| s.edge_usage(e)).collect())
            .collect();
        Self {
            snapshots,
            demands,
            widths,
            slot_len_s,
            compute,
            link,
            isl_edges,
            usage,
        }
    }

    pub fn k(&self) -> usize {
        self.snapshots.len()
    }

    pub fn n_sats(&self) -> usize {
        self.snapshots[0].n_sats
    }

    pub fn source(&self) -> usize {
        self.snapshots[0].source
    }

    pub fn total_images(&self) -> u64 {
        self.widths.iter().map(|&w| w as u64).sum()
    }

    /// Usage of enforced edge `i` in frame `k`.
    pub fn usage(&self, i: usize, k: usize) -> &EdgeUsage {
        &self.usage[i][k]
    }

    /// Cycle budget of one satellite over the whole horizon.
    pub fn cycle_budget(&self) -> f64 {
        self.k() as f64 * self.slot_len_s * self.compute.n_cores as f64 * self.compute.f_cpu_hz
    }

    pub fn downlink_capacity(&self) -> f64 {
        self.slot_len_s * self.snapshots.iter().map(|s| s.rate_bps).sum::<f64>()
    }

    pub fn isl_capacity(&self) -> f64 {
        self.k() as f64 * self.slot_len_s * self.link.isl_rate_bps
    }

    pub fn cycles(&self, rho: f64) -> f64 {
        compression_cycles(rho, self.compute.epsilon, self.compute.complexity_model)
    }

    pub fn cycles_slope(&self, rho: f64) -> f64 {
        compression_cycles_slope(rho, self.compute.epsilon, self.compute.complexity_model)
    }

    /// Cycles requested from each satellite, `Y_n = Σ_k x_kn C(ρ_k)`.
    pub fn satellite_cycles(&self, x: &Array2<f64>, rho: &Array1<f64>) -> Array1<f64> {
        let n = self.n_sats();
        let mut y = Array1::zeros(n);
        for k in 0..self.k() {
            let c = self.cycles(rho[k]);
            for v in 0..n {
                y[v] += x[[k, v]] * c;
            }
        }
        y
    }

    /// Bits that cross the downlink over the horizon.
    pub fn downlink_load(&self, x: &Array2<f64>, rho: &Array1<f64>) -> f64 {
        let n = self.n_sats();
        let mut load = 0.0;
        for k in 0..self.k() {
            let processed: f64 = (0..n).map(|v| x[[k, v]]).sum();
            load += x[[k, n]] + processed / rho[k];
        }
        load
    }

    /// Bits that cross enforced edge `i` over the horizon.
    pub fn isl_load(&self, i: usize, x: &Array2<f64>, rho: &Array1<f64>) -> f64 {
        let n = self.n_sats();
        let mut load = 0.0;
        for k in 0..self.k() {
            let u = &self.usage[i][k];
            if u.direct {
                load += x[[k, n]];
            }
            for v in 0..n {
                let xv = x[[k, v]];
                if xv == 0.0 {
                    continue;
                }
                if u.scatter[v] {
                    load += xv;
                }
                if u.gather[v] {
                    load += xv / rho[k];
                }
            }
        }
        load
    }
}

/// Energy split by phase and frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub scatter: Vec<f64>,
    pub gather: Vec<f64>,
    pub proc: Vec<f64>,
}

impl EnergyBreakdown {
    pub fn scatter_total(&self) -> f64 {
        self.scatter.iter().sum()
    }

    pub fn gather_total(&self) -> f64 {
        self.gather.iter().sum()
    }

    pub fn proc_total(&self) -> f64 {
        self.proc.iter().sum()
    }

    pub fn frame_total(&self, k: usize) -> f64 {
        self.scatter[k] + self.gather[k] + self.proc[k]
    }

    pub fn total(&self) -> f64 {
        self.scatter_total() + self.gather_total() + self.proc_total()
    }
}

/// Objective value of a plan. Infinite terms flag plans that would need a
/// missing downlink.
pub fn total_energy(
    x: &Array2<f64>,
    rho: &Array1<f64>,
    freq: &Array2<f64>,
    problem: &ProblemInstance,
) -> EnergyBreakdown {
    let n = problem.n_sats();
    let mut out = EnergyBreakdown::default();
    for (k, topo) in problem.snapshots.iter().enumerate() {
        let row = x.row(k);
        out.scatter.push(e_scatter(row, topo, &problem.link));
        out.gather.push(if row.iter().take(n).all(|&v| v == 0.0) {
            0.0
        } else {
            e_gather(row, rho[k], topo, &problem.link)
        });
        let proc = (0..n)
            .map(|v| e_proc(x[[k, v]], rho[k], freq[[k, v]], &problem.compute))
            .sum();
        out.proc.push(proc);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Relative excess of requested cycles over the budget.
    Processing {
        sat: usize,
        relative: f64,
    },
    Downlink {
        excess_bits: f64,
    },
    Isl {
        edge: Edge,
        excess_bits: f64,
    },
    NoDownlink {
        frame: usize,
    },
    RowSum {
        frame: usize,
    },
    NegativeShare {
        frame: usize,
    },
    RhoBounds {
        frame: usize,
    },
    FrequencyBounds {
        frame: usize,
        sat: usize,
    },
}

impl Violation {
    pub fn tag(&self) -> String {
        match self {
            Violation::Processing { sat, .. } => format!("processing:{sat}"),
            Violation::Downlink { .. } => "downlink".into(),
            Violation::Isl { edge, .. } => format!("isl:{}-{}", edge.0, edge.1),
            Violation::NoDownlink { frame } => format!("no_downlink:{frame}"),
            Violation::RowSum { frame } => format!("row_sum:{frame}"),
            Violation::NegativeShare { frame } => format!("negative:{frame}"),
            Violation::RhoBounds { frame } => format!("rho_bounds:{frame}"),
            Violation::FrequencyBounds { frame, sat } => format!("frequency:{frame}:{sat}"),
        }
    }
}

/// Slack of every constraint. Positive slack means room left.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Cycle budget minus requested cycles, per satellite.
    pub processing_slack: Vec<f64>,
    pub cycle_budget: f64,
    pub downlink_slack: f64,
    pub downlink_capacity: f64,
    pub isl_slack: Vec<(Edge, f64)>,
    pub isl_capacity: f64,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn tags(&self) -> String {
        self.violations.iter().map(Violation::tag).collect::<Vec<_>>().join(";")
    }

    /// Largest relative processing overload, 0 if none.
    pub fn max_processing_residual(&self) -> f64 {
        self.processing_slack
            .iter()
            .map(|&s| (-s / self.cycle_budget).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Evaluates every constraint of the problem. Processing overloads up to
/// `tau_proc` (relative to the cycle budget) are tolerated; rate constraints
/// are checked exactly.
pub fn check_feasibility(
    x: &Array2<f64>,
    rho: &Array1<f64>,
    freq: &Array2<f64>,
    problem: &ProblemInstance,
    tau_proc: f64,
) -> FeasibilityReport {
    let n = problem.n_sats();
    let cfg = &problem.compute;
    let mut violations = Vec::new();

    for k in 0..problem.k() {
        let d = problem.demands[k];
        let row = x.row(k);
        if row.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            violations.push(Violation::NegativeShare { frame: k });
        }
        let sum: f64 = row.sum();
        if (sum - d).abs() > 1e-9 * d.max(1.0) {
            violations.push(Violation::RowSum { frame: k });
        }
        if !(rho[k] >= 1.0 && rho[k] <= cfg.rho_max) {
            violations.push(Violation::RhoBounds { frame: k });
        }
        if d > 0.0 && problem.snapshots[k].rate_bps <= 0.0 {
            violations.push(Violation::NoDownlink { frame: k });
        }
        for v in 0..n {
            let f = freq[[k, v]];
            if !(f >= 0.0 && f <= cfg.f_cpu_hz) {
                violations.push(Violation::FrequencyBounds { frame: k, sat: v });
            }
        }
    }

    let budget = problem.cycle_budget();
    let horizon = problem.k() as f64 * problem.slot_len_s;
    let y = problem.satellite_cycles(x, rho);
    let mut processing_slack = Vec::with_capacity(n);
    for v in 0..n {
        processing_slack.push(budget - y[v]);
        let busy: f64 = (0..problem.k())
            .map(|k| processing_time(x[[k, v]], rho[k], freq[[k, v]], cfg))
            .sum();
        let relative = (y[v] / budget - 1.0).max(busy / horizon - 1.0);
        if relative > tau_proc {
            violations.push(Violation::Processing { sat: v, relative });
        }
    }

    let downlink_capacity = problem.downlink_capacity();
    let downlink_slack = downlink_capacity - problem.downlink_load(x, rho);
    if downlink_slack < 0.0 {
        violations.push(Violation::Downlink {
            excess_bits: -downlink_slack,
        });
    }

    let isl_capacity = problem.isl_capacity();
    let mut isl_slack = Vec::new();
    for (i, &e) in problem.isl_edges.iter().enumerate() {
        let s = isl_capacity - problem.isl_load(i, x, rho);
        isl_slack.push((e, s));
        if s < 0.0 {
            violations.push(Violation::Isl {
                edge: e,
                excess_bits: -s,
            });
        }
    }

    FeasibilityReport {
        processing_slack,
        cycle_budget: budget,
        downlink_slack,
        downlink_capacity,
        isl_slack,
        isl_capacity,
        violations,
    }
}

/// A solved (or attempted) plan.
#[derive(Debug, Clone)]
pub struct Plan {
    /// K × (N+1) bits; the last column is the direct-download share.
    pub x: Array2<f64>,
    pub rho: Array1<f64>,
    /// K × N per-core frequencies in Hz.
    pub freq: Array2<f64>,
    pub energy: EnergyBreakdown,
    pub feasibility: FeasibilityReport,
}

impl Plan {
    pub fn evaluate(
        x: Array2<f64>,
        rho: Array1<f64>,
        freq: Array2<f64>,
        problem: &ProblemInstance,
        tau_proc: f64,
    ) -> Self {
        let energy = total_energy(&x, &rho, &freq, problem);
        let feasibility = check_feasibility(&x, &rho, &freq, problem, tau_proc);
        Self {
            x,
            rho,
            freq,
            energy,
            feasibility,
        }
    }

    pub fn feasible(&self) -> bool {
        self.feasibility.feasible()
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.total()
    }

    /// Joules per image, `None` for an empty task.
    pub fn energy_per_image(&self, problem: &ProblemInstance) -> Option<f64> {
        let w = problem.total_images();
        (w > 0).then(|| self.total_energy() / w as f64)
    }
}
