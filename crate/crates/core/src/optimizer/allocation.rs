//! Allocation block: augmented-Lagrangian minimization over the shares of
//! every frame, with the optimal frequencies substituted in closed form.

use ndarray::{Array1, Array2};

use super::projection::{FeasibleSet, HalfSpace};
use super::spg::{self, Smooth, SpgOptions};
use super::{al_grad, al_value, energy_scale, OptimizerState, SolverSettings, StallWatch, TraceRow, RATE_MARGIN};
use crate::energy::{capacitance, isl_energy_per_bit, rf_energy_per_bit, ProblemInstance};

/// Proximal weight in normalized energy per squared share.
const PROX_WEIGHT: f64 = 1e-1;

/// Objective of the allocation block in normalized shares `z = x / D_k`.
pub(crate) struct AllocationModel<'a> {
    p: &'a ProblemInstance,
    cols: usize,
    demands: Vec<f64>,
    cycles: Vec<f64>,
    /// Linear coefficients per share, already divided by the energy scale.
    lin: Vec<f64>,
    /// `ν / (M² E_ref)` with `M = K N_CPU T`.
    cubic: f64,
    budget: f64,
    lambda: Vec<f64>,
    alpha: Vec<f64>,
    set: FeasibleSet,
    /// Proximal weight and centre; keeps the block minimizer unique when the
    /// objective is flat along exchanges of bits between frames.
    prox: f64,
    anchor: Vec<f64>,
}

impl<'a> AllocationModel<'a> {
    pub(crate) fn new(p: &'a ProblemInstance, rho: &Array1<f64>, state: &OptimizerState) -> Self {
        let n = p.n_sats();
        let cols = n + 1;
        let k = p.k();
        let e_ref = energy_scale(p);
        let b = isl_energy_per_bit(&p.link);
        let mut lin = vec![0.0; k * cols];
        let mut cycles = vec![0.0; k];
        let mut rows = Vec::new();
        for (kk, topo) in p.snapshots.iter().enumerate() {
            let d = p.demands[kk];
            cycles[kk] = p.cycles(rho[kk]);
            if d <= 0.0 {
                continue;
            }
            rows.push(kk);
            let a = rf_energy_per_bit(topo.rate_bps, &p.link);
            for v in 0..n {
                let c = b * topo.hops_src_to(v) as f64 + (a + b * (topo.hops_to_gs(v) - 1) as f64) / rho[kk];
                lin[kk * cols + v] = d * c / e_ref;
            }
            lin[kk * cols + n] = d * (a + b * (topo.hops_src_to_gs() - 1) as f64) / e_ref;
        }
        let mut halfspaces = Vec::new();
        let dl_cap = p.downlink_capacity() * (1.0 - RATE_MARGIN);
        let mut a = vec![0.0; k * cols];
        for &kk in &rows {
            let d = p.demands[kk];
            for v in 0..n {
                a[kk * cols + v] = d / rho[kk];
            }
            a[kk * cols + n] = d;
        }
        halfspaces.push(HalfSpace::normalized(a, dl_cap));
        let isl_cap = p.isl_capacity() * (1.0 - RATE_MARGIN);
        for i in 0..p.isl_edges.len() {
            let mut a = vec![0.0; k * cols];
            for &kk in &rows {
                let d = p.demands[kk];
                let u = p.usage(i, kk);
                for v in 0..n {
                    let mut w = 0.0;
                    if u.scatter[v] {
                        w += 1.0;
                    }
                    if u.gather[v] {
                        w += 1.0 / rho[kk];
                    }
                    a[kk * cols + v] = d * w;
                }
                if u.direct {
                    a[kk * cols + n] = d;
                }
            }
            halfspaces.push(HalfSpace::normalized(a, isl_cap));
        }
        let m = k as f64 * p.compute.n_cores as f64 * p.slot_len_s;
        let mut set = FeasibleSet {
            cols,
            rows,
            bounds: None,
            halfspaces,
            max_iter: 5000,
            tol: 1e-13,
        };
        set.relax_unattainable();
        Self {
            p,
            cols,
            demands: p.demands.clone(),
            cycles,
            lin,
            cubic: capacitance(&p.compute) / (m * m * e_ref),
            budget: p.cycle_budget(),
            lambda: state.lambda_proc.clone(),
            alpha: state.alpha_proc.clone(),
            set,
            prox: 0.0,
            anchor: Vec::new(),
        }
    }

    /// Normalized cycles `Y_n / B` requested from each satellite.
    pub(crate) fn load(&self, z: &[f64]) -> Vec<f64> {
        let n = self.p.n_sats();
        let mut y = vec![0.0; n];
        for &kk in &self.set.rows {
            let w = self.demands[kk] * self.cycles[kk] / self.budget;
            if w == 0.0 {
                continue;
            }
            for v in 0..n {
                y[v] += w * z[kk * self.cols + v];
            }
        }
        y
    }

    pub(crate) fn to_shares(&self, x: &Array2<f64>) -> Vec<f64> {
        let mut z = vec![0.0; self.p.k() * self.cols];
        for &kk in &self.set.rows {
            for j in 0..self.cols {
                z[kk * self.cols + j] = x[[kk, j]] / self.demands[kk];
            }
        }
        z
    }

    pub(crate) fn to_bits(&self, z: &[f64]) -> Array2<f64> {
        let mut x = Array2::zeros((self.p.k(), self.cols));
        for &kk in &self.set.rows {
            for j in 0..self.cols {
                x[[kk, j]] = z[kk * self.cols + j] * self.demands[kk];
            }
        }
        x
    }
}

impl Smooth for AllocationModel<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let mut f: f64 = self.lin.iter().zip(z).map(|(c, z)| c * z).sum();
        if self.prox > 0.0 {
            f += 0.5 * self.prox * z.iter().zip(&self.anchor).map(|(z, c)| (z - c).powi(2)).sum::<f64>();
        }
        let y = self.load(z);
        let b3 = self.budget.powi(3);
        for (v, &yn) in y.iter().enumerate() {
            f += self.cubic * b3 * yn.powi(3);
            f += al_value(yn - 1.0, self.lambda[v], self.alpha[v]);
        }
        f
    }

    fn gradient(&self, z: &[f64], g: &mut [f64]) {
        let n = self.p.n_sats();
        g.copy_from_slice(&self.lin);
        if self.prox > 0.0 {
            for ((g, z), c) in g.iter_mut().zip(z).zip(&self.anchor) {
                *g += self.prox * (z - c);
            }
        }
        let y = self.load(z);
        let b3 = self.budget.powi(3);
        // Derivative with respect to the normalized load Y_n / B.
        let dy: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(v, &yn)| 3.0 * self.cubic * b3 * yn * yn + al_grad(yn - 1.0, self.lambda[v], self.alpha[v]))
            .collect();
        for &kk in &self.set.rows {
            let w = self.demands[kk] * self.cycles[kk] / self.budget;
            for v in 0..n {
                g[kk * self.cols + v] += w * dy[v];
            }
        }
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        self.set.project(v)
    }
}

/// The augmented-Lagrangian objective minimized by the allocation block, in
/// shares `x / D_k` laid out row-major over `K × (N + 1)`.
pub fn allocation_objective<'a>(
    problem: &'a ProblemInstance,
    rho: &Array1<f64>,
    state: &OptimizerState,
) -> impl Smooth + 'a {
    AllocationModel::new(problem, rho, state)
}

/// Minimizes the allocation block for fixed compression ratios. Multipliers
/// and penalties of the processing constraint live in `state` and persist
/// across calls.
pub fn ipdd_allocation(
    problem: &ProblemInstance,
    x0: &Array2<f64>,
    rho: &Array1<f64>,
    state: &mut OptimizerState,
    settings: &SolverSettings,
    trace: &mut Vec<TraceRow>,
) -> Array2<f64> {
    let mut model = AllocationModel::new(problem, rho, state);
    if model.set.rows.is_empty() {
        return Array2::zeros((problem.k(), problem.n_sats() + 1));
    }
    let opts = SpgOptions {
        max_iter: settings.inner_max_iter,
        tol: settings.inner_tol,
        armijo: settings.armijo,
        shrink: settings.backtrack,
    };
    let mut z = model.to_shares(x0);
    model.prox = PROX_WEIGHT;
    model.anchor = z.clone();
    let mut watch = StallWatch::default();
    for round in 0..settings.penalty_max_iter {
        let res = spg::minimize(&model, &z, opts);
        state.inner_iterations += res.iterations;
        if !res.converged {
            state.inner_cap_hit = true;
        }
        let change = res.x.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        z = res.x;
        let y = model.load(&z);
        let mut worst: f64 = 0.0;
        for (v, &yn) in y.iter().enumerate() {
            let g = yn - 1.0;
            worst = worst.max(g);
            if g <= settings.tau_proc {
                state.lambda_proc[v] = (state.lambda_proc[v] + state.alpha_proc[v] * g).max(0.0);
            } else {
                state.alpha_proc[v] = (state.alpha_proc[v] / settings.beta).min(settings.alpha_max);
            }
            state.slack_proc[v] = (-g - state.lambda_proc[v] / state.alpha_proc[v]).max(0.0);
        }
        state.penalty_rounds += 1;
        trace.push(TraceRow {
            outer: state.outer_iterations,
            block: "allocation",
            round,
            inner_iterations: res.iterations,
            objective: res.value,
            processing_residual: worst.max(0.0),
            downlink_residual: model.set.halfspaces[0].violation(&z),
            isl_residual: model.set.halfspaces[1..]
                .iter()
                .map(|h| h.violation(&z))
                .fold(0.0, f64::max),
        });
        model.lambda.clone_from(&state.lambda_proc);
        model.alpha.clone_from(&state.alpha_proc);
        if worst <= settings.tau_proc && change <= settings.delta {
            break;
        }
        let saturated = y
            .iter()
            .zip(&state.alpha_proc)
            .all(|(&yn, &a)| yn - 1.0 <= settings.tau_proc || a >= settings.alpha_max);
        if saturated || (worst > settings.tau_proc && watch.stalled(worst)) {
            // Larger penalties will not restore feasibility for this block.
            break;
        }
    }
    model.to_bits(&z)
}
