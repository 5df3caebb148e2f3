//! Energy-minimal planning: closed-form frequencies, the allocation and
//! compression blocks, the block-coordinate-descent driver and baselines.

mod allocation;
mod compression;
pub mod oracle;
pub mod projection;
pub mod spg;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{isl_energy_per_bit, rf_energy_per_bit, ComplexityModel, Plan, ProblemInstance};

pub use allocation::{allocation_objective, ipdd_allocation};
pub use compression::{compression_objective, pg_compression, polish_rho};

/// Relative safety margin applied to the rate capacities inside the blocks,
/// so that returned plans meet them exactly.
pub(crate) const RATE_MARGIN: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error("no feasible plan; binding constraint: {binding}")]
    Infeasible { binding: String },
    #[error("iteration cap reached before convergence")]
    IterationCapExceeded,
    #[error("grid oracle cannot handle {sats} satellites and {frames} frames")]
    OracleTooLarge { sats: usize, frames: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Outer/penalty-round stopping tolerance on normalized variables.
    pub delta: f64,
    /// Processing-residual threshold, relative to the cycle budget.
    pub tau_proc: f64,
    pub alpha0: f64,
    /// Penalty growth is `1/beta`.
    pub beta: f64,
    pub alpha_max: f64,
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    pub outer_max_iter: usize,
    pub penalty_max_iter: usize,
    pub armijo: f64,
    pub backtrack: f64,
    /// Extra randomized starts on top of the deterministic one.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            tau_proc: 1e-6,
            alpha0: 1.0,
            beta: 0.5,
            alpha_max: 1e12,
            inner_max_iter: 5000,
            inner_tol: 1e-10,
            outer_max_iter: 100,
            penalty_max_iter: 60,
            armijo: 1e-4,
            backtrack: 0.5,
            restarts: 0,
            seed: 0,
        }
    }
}

/// Multipliers, penalties and counters carried across blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub lambda_proc: Vec<f64>,
    pub alpha_proc: Vec<f64>,
    pub slack_proc: Vec<f64>,
    pub lambda_dl: f64,
    pub alpha_dl: f64,
    pub slack_dl: f64,
    pub lambda_isl: Vec<f64>,
    pub alpha_isl: Vec<f64>,
    pub slack_isl: Vec<f64>,
    pub lambda_rho: Vec<f64>,
    pub alpha_rho: Vec<f64>,
    pub slack_rho: Vec<f64>,
    pub outer_iterations: usize,
    pub penalty_rounds: usize,
    pub inner_iterations: usize,
    pub inner_cap_hit: bool,
    pub outer_cap_hit: bool,
}

impl OptimizerState {
    pub fn new(problem: &ProblemInstance, settings: &SolverSettings) -> Self {
        let n = problem.n_sats();
        let e = problem.isl_edges.len();
        let k = problem.k();
        let a = settings.alpha0;
        Self {
            lambda_proc: vec![0.0; n],
            alpha_proc: vec![a; n],
            slack_proc: vec![0.0; n],
            lambda_dl: 0.0,
            alpha_dl: a,
            slack_dl: 0.0,
            lambda_isl: vec![0.0; e],
            alpha_isl: vec![a; e],
            slack_isl: vec![0.0; e],
            lambda_rho: vec![0.0; k],
            alpha_rho: vec![a; k],
            slack_rho: vec![0.0; k],
            outer_iterations: 0,
            penalty_rounds: 0,
            inner_iterations: 0,
            inner_cap_hit: false,
            outer_cap_hit: false,
        }
    }
}

/// One line of the convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer: usize,
    pub block: &'static str,
    pub round: usize,
    pub inner_iterations: usize,
    /// Normalized augmented-Lagrangian value of the block, or joules for
    /// `block == "outer"`.
    pub objective: f64,
    pub processing_residual: f64,
    pub downlink_residual: f64,
    pub isl_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Direct,
    Local,
    Global,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Direct => "direct",
            Strategy::Local => "local",
            Strategy::Global => "global",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(Strategy::Direct),
            "local" => Ok(Strategy::Local),
            "global" => Ok(Strategy::Global),
            other => Err(format!("unknown strategy '{other}' (direct, local, global)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub plan: Plan,
    pub state: OptimizerState,
    pub trace: Vec<TraceRow>,
    /// Processing overload that forced a frequency clamp.
    pub frequency_clamped: bool,
    /// Accepted outer iterates in order.
    pub history: Vec<OuterIterate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterIterate {
    pub energy: f64,
    pub feasible: bool,
}

impl Solution {
    pub fn feasible(&self) -> bool {
        self.plan.feasible()
    }

    pub fn into_result(self) -> Result<Self, OptimizerError> {
        if self.plan.feasible() {
            Ok(self)
        } else {
            Err(OptimizerError::Infeasible {
                binding: self.plan.feasibility.tags(),
            })
        }
    }
}

/// `((max(0, λ + αg))² - λ²) / (2α)`: augmented-Lagrangian term of `g <= 0`.
/// Flags a residual that has not improved by 1% over five updates.
#[derive(Debug)]
pub(crate) struct StallWatch {
    best: f64,
    count: usize,
}

impl Default for StallWatch {
    fn default() -> Self {
        Self {
            best: f64::INFINITY,
            count: 0,
        }
    }
}

impl StallWatch {
    pub(crate) fn stalled(&mut self, residual: f64) -> bool {
        if residual < self.best * 0.99 {
            self.best = residual;
            self.count = 0;
        } else {
            self.count += 1;
        }
        self.count >= 5
    }
}

pub(crate) fn al_value(g: f64, lambda: f64, alpha: f64) -> f64 {
    let t = (lambda + alpha * g).max(0.0);
    (t * t - lambda * lambda) / (2.0 * alpha)
}

pub(crate) fn al_grad(g: f64, lambda: f64, alpha: f64) -> f64 {
    (lambda + alpha * g).max(0.0)
}

/// Energy unit used to normalize the objective. Proportional to every power
/// parameter, so a common power scale leaves the iterates unchanged.
pub(crate) fn energy_scale(p: &ProblemInstance) -> f64 {
    let total: f64 = p.demands.iter().sum();
    let rf = p
        .snapshots
        .iter()
        .map(|s| rf_energy_per_bit(s.rate_bps, &p.link))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let per_bit =
        rf + isl_energy_per_bit(&p.link) + p.compute.p_proc_max_w / (p.compute.n_cores as f64 * p.compute.f_cpu_hz);
    if total > 0.0 && per_bit > 0.0 {
        total * per_bit
    } else {
        1.0
    }
}

/// Per-satellite frequency that exactly fills the horizon with the requested
/// cycles, constant over frames. Returns the K × N matrix and whether any
/// satellite had to be clamped to the maximum frequency.
pub fn optimal_frequencies(problem: &ProblemInstance, x: &Array2<f64>, rho: &Array1<f64>) -> (Array2<f64>, bool) {
    let n = problem.n_sats();
    let k = problem.k();
    let y = problem.satellite_cycles(x, rho);
    let denom = k as f64 * problem.compute.n_cores as f64 * problem.slot_len_s;
    let mut f = Array2::zeros((k, n));
    let mut clamped = false;
    for v in 0..n {
        let mut fv = y[v] / denom;
        if fv > problem.compute.f_cpu_hz {
            fv = problem.compute.f_cpu_hz;
            clamped = true;
        }
        for kk in 0..k {
            f[[kk, v]] = fv;
        }
    }
    (f, clamped)
}

/// Initial ratios: the smallest value that lets each frame fit its own
/// downlink slot, within `[1, ρ_max]`.
pub fn rho_init(problem: &ProblemInstance) -> Array1<f64> {
    let rho_max = problem.compute.rho_max;
    Array1::from_iter(problem.snapshots.iter().zip(&problem.demands).map(|(s, &d)| {
        if s.rate_bps <= 0.0 {
            rho_max
        } else {
            (d / (problem.slot_len_s * s.rate_bps)).max(1.0).min(rho_max)
        }
    }))
}

fn evaluate(problem: &ProblemInstance, x: Array2<f64>, rho: Array1<f64>, tau: f64) -> (Plan, bool) {
    let (f, clamped) = optimal_frequencies(problem, &x, &rho);
    (Plan::evaluate(x, rho, f, problem, tau), clamped)
}

fn source_only(problem: &ProblemInstance) -> Array2<f64> {
    let mut x = Array2::zeros((problem.k(), problem.n_sats() + 1));
    for k in 0..problem.k() {
        x[[k, problem.source()]] = problem.demands[k];
    }
    x
}

fn normalized_change(
    p: &ProblemInstance,
    x0: &Array2<f64>,
    x1: &Array2<f64>,
    r0: &Array1<f64>,
    r1: &Array1<f64>,
) -> f64 {
    let mut dx = 0.0;
    for k in 0..p.k() {
        let d = p.demands[k];
        if d > 0.0 {
            for j in 0..x0.ncols() {
                dx += ((x1[[k, j]] - x0[[k, j]]) / d).powi(2);
            }
        }
    }
    let dr: f64 = r0
        .iter()
        .zip(r1)
        .map(|(a, b)| ((a - b) / p.compute.rho_max).powi(2))
        .sum();
    dx.sqrt() + dr.sqrt()
}

fn infeasibility(plan: &Plan) -> f64 {
    let f = &plan.feasibility;
    let dl = (-f.downlink_slack / f.downlink_capacity).max(0.0);
    let isl = f
        .isl_slack
        .iter()
        .map(|(_, s)| (-s / f.isl_capacity).max(0.0))
        .fold(0.0, f64::max);
    f.max_processing_residual().max(dl).max(isl)
}

fn infeasible_without_link(problem: &ProblemInstance) -> bool {
    problem
        .snapshots
        .iter()
        .zip(&problem.demands)
        .any(|(s, &d)| d > 0.0 && s.rate_bps <= 0.0)
}

/// Block coordinate descent from a given starting allocation.
fn bcd_from(problem: &ProblemInstance, settings: &SolverSettings, x_start: Array2<f64>) -> Solution {
    let constant = problem.compute.complexity_model == ComplexityModel::Constant;
    let mut x = x_start;
    let mut rho = if constant {
        Array1::from_elem(problem.k(), problem.compute.rho_max)
    } else {
        rho_init(problem)
    };
    let mut state = OptimizerState::new(problem, settings);
    let mut trace = Vec::new();
    let mut history = Vec::new();
    let tau = settings.tau_proc;

    if !infeasible_without_link(problem) {
        let mut best_feasible: Option<f64> = None;
        let mut watch = StallWatch::default();
        let mut stalled = false;
        state.outer_cap_hit = true;
        for outer in 0..settings.outer_max_iter {
            state.outer_iterations = outer;
            let x_new = ipdd_allocation(problem, &x, &rho, &mut state, settings, &mut trace);
            let rho_new = if constant {
                rho.clone()
            } else {
                pg_compression(problem, &x_new, &rho, &mut state, settings, &mut trace)
            };
            let (plan, _) = evaluate(problem, x_new.clone(), rho_new.clone(), tau);
            let energy = plan.total_energy();
            if let Some(best) = best_feasible {
                if plan.feasible() && energy > best * (1.0 + 1e-9) {
                    // Accepting would break monotone descent; keep the last iterate.
                    state.outer_cap_hit = false;
                    break;
                }
            }
            let change = normalized_change(problem, &x, &x_new, &rho, &rho_new);
            x = x_new;
            rho = rho_new;
            history.push(OuterIterate {
                energy,
                feasible: plan.feasible(),
            });
            trace.push(TraceRow {
                outer,
                block: "outer",
                round: 0,
                inner_iterations: 0,
                objective: energy,
                processing_residual: plan.feasibility.max_processing_residual(),
                downlink_residual: (-plan.feasibility.downlink_slack / plan.feasibility.downlink_capacity).max(0.0),
                isl_residual: plan
                    .feasibility
                    .isl_slack
                    .iter()
                    .map(|(_, s)| (-s / plan.feasibility.isl_capacity).max(0.0))
                    .fold(0.0, f64::max),
            });
            if plan.feasible() {
                best_feasible = Some(energy);
                watch = StallWatch::default();
            } else {
                // Infeasible iterates that stop approaching feasibility.
                stalled = watch.stalled(infeasibility(&plan));
            }
            if change <= settings.delta || stalled {
                state.outer_cap_hit = false;
                break;
            }
        }
    }
    let (plan, clamped) = evaluate(problem, x, rho, tau);
    Solution {
        plan,
        state,
        trace,
        frequency_clamped: clamped,
        history,
    }
}

fn perturbed_start(problem: &ProblemInstance, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = problem.n_sats();
    let mut x = Array2::zeros((problem.k(), n + 1));
    for k in 0..problem.k() {
        let d = problem.demands[k];
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        w[problem.source()] += n as f64 * 0.5;
        let s: f64 = w.iter().sum();
        for v in 0..n {
            x[[k, v]] = d * w[v] / s;
        }
    }
    x
}

fn better(a: &Solution, b: &Solution) -> bool {
    match (a.feasible(), b.feasible()) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => a.plan.total_energy() < b.plan.total_energy(),
        (false, false) => a.plan.feasibility.max_processing_residual() < b.plan.feasibility.max_processing_residual(),
    }
}

/// Joint optimization of allocation, compression and frequencies.
pub fn bcd_solve(problem: &ProblemInstance, settings: &SolverSettings) -> Solution {
    let mut best = bcd_from(problem, settings, source_only(problem));
    if settings.restarts > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        for _ in 0..settings.restarts {
            let start = perturbed_start(problem, &mut rng);
            let cand = bcd_from(problem, settings, start);
            if better(&cand, &best) {
                best = cand;
            }
        }
    }
    best
}

/// Every frame downloaded raw; no processing.
pub fn baseline_direct(problem: &ProblemInstance, settings: &SolverSettings) -> Solution {
    let n = problem.n_sats();
    let mut x = Array2::zeros((problem.k(), n + 1));
    for k in 0..problem.k() {
        x[[k, n]] = problem.demands[k];
    }
    let rho = Array1::ones(problem.k());
    let freq = Array2::zeros((problem.k(), n));
    let plan = Plan::evaluate(x, rho, freq, problem, settings.tau_proc);
    Solution {
        plan,
        state: OptimizerState::new(problem, settings),
        trace: Vec::new(),
        frequency_clamped: false,
        history: Vec::new(),
    }
}

/// Everything processed on the source satellite; only the ratios are
/// optimized.
pub fn baseline_local(problem: &ProblemInstance, settings: &SolverSettings) -> Solution {
    let x = source_only(problem);
    let mut state = OptimizerState::new(problem, settings);
    let mut trace = Vec::new();
    let rho = if problem.compute.complexity_model == ComplexityModel::Constant {
        Array1::from_elem(problem.k(), problem.compute.rho_max)
    } else if infeasible_without_link(problem) {
        rho_init(problem)
    } else {
        pg_compression(problem, &x, &rho_init(problem), &mut state, settings, &mut trace)
    };
    let (plan, clamped) = evaluate(problem, x, rho, settings.tau_proc);
    Solution {
        plan,
        state,
        trace,
        frequency_clamped: clamped,
        history: Vec::new(),
    }
}

pub fn solve(problem: &ProblemInstance, strategy: Strategy, settings: &SolverSettings) -> Solution {
    match strategy {
        Strategy::Direct => baseline_direct(problem, settings),
        Strategy::Local => baseline_local(problem, settings),
        Strategy::Global => bcd_solve(problem, settings),
    }
}
