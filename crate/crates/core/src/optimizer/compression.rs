//! Compression block: augmented-Lagrangian projected gradient over the
//! per-frame compression ratios for a fixed allocation.
//!
//! The block works in inverse ratios `w_k = 1 / ρ_k`. Downlink and ISL loads
//! are linear in `w`, so those limits are held by projection as in the
//! allocation block; their multipliers still follow the usual updates.

use ndarray::{Array1, Array2};

use super::projection::{FeasibleSet, HalfSpace};
use super::spg::{self, Smooth, SpgOptions};
use super::{al_grad, al_value, energy_scale, OptimizerState, SolverSettings, StallWatch, TraceRow, RATE_MARGIN};
use crate::energy::{capacitance, isl_energy_per_bit, rf_energy_per_bit, ProblemInstance};

struct CompressionModel<'a> {
    p: &'a ProblemInstance,
    /// Frames with processed bits; only these ratios are free.
    frames: Vec<usize>,
    rho_fixed: Vec<f64>,
    rho_max: f64,
    /// Gather coefficient per frame, divided by the energy scale.
    gather: Vec<f64>,
    x: Array2<f64>,
    processed: Vec<f64>,
    direct_total: f64,
    /// Per edge: load independent of ρ, and compressed share per frame.
    isl_fixed: Vec<f64>,
    isl_gather: Vec<Vec<f64>>,
    cubic: f64,
    budget: f64,
    dl_cap: f64,
    isl_cap: f64,
    st: OptimizerState,
    set: FeasibleSet,
}

impl<'a> CompressionModel<'a> {
    fn new(p: &'a ProblemInstance, x: &Array2<f64>, rho: &Array1<f64>, st: &OptimizerState) -> Self {
        let n = p.n_sats();
        let e_ref = energy_scale(p);
        let b = isl_energy_per_bit(&p.link);
        let mut frames = Vec::new();
        let mut gather = vec![0.0; p.k()];
        let mut processed = vec![0.0; p.k()];
        let mut direct_total = 0.0;
        for (k, topo) in p.snapshots.iter().enumerate() {
            direct_total += x[[k, n]];
            let a = rf_energy_per_bit(topo.rate_bps, &p.link);
            let mut g = 0.0;
            let mut tot = 0.0;
            for v in 0..n {
                let xv = x[[k, v]];
                if xv > 0.0 {
                    g += xv * (a + b * (topo.hops_to_gs(v) - 1) as f64);
                    tot += xv;
                }
            }
            processed[k] = tot;
            gather[k] = g / e_ref;
            if tot > 0.0 {
                frames.push(k);
            }
        }
        let mut isl_fixed = Vec::new();
        let mut isl_gather = Vec::new();
        for i in 0..p.isl_edges.len() {
            let mut fixed = 0.0;
            let mut per = vec![0.0; p.k()];
            for k in 0..p.k() {
                let u = p.usage(i, k);
                if u.direct {
                    fixed += x[[k, n]];
                }
                for v in 0..n {
                    if u.scatter[v] {
                        fixed += x[[k, v]];
                    }
                    if u.gather[v] {
                        per[k] += x[[k, v]];
                    }
                }
            }
            isl_fixed.push(fixed);
            isl_gather.push(per);
        }
        let m = p.k() as f64 * p.compute.n_cores as f64 * p.slot_len_s;
        let dl_cap = p.downlink_capacity() * (1.0 - RATE_MARGIN);
        let isl_cap = p.isl_capacity() * (1.0 - RATE_MARGIN);
        let mut halfspaces = vec![HalfSpace::normalized(
            frames.iter().map(|&k| processed[k]).collect(),
            dl_cap - direct_total,
        )];
        for (fixed, per) in isl_fixed.iter().zip(&isl_gather) {
            halfspaces.push(HalfSpace::normalized(
                frames.iter().map(|&k| per[k]).collect(),
                isl_cap - fixed,
            ));
        }
        let mut set = FeasibleSet {
            cols: frames.len(),
            rows: Vec::new(),
            bounds: Some((1.0 / p.compute.rho_max, 1.0)),
            halfspaces,
            max_iter: 5000,
            tol: 1e-13,
        };
        set.relax_unattainable();
        Self {
            p,
            frames,
            rho_fixed: rho.to_vec(),
            rho_max: p.compute.rho_max,
            gather,
            x: x.clone(),
            processed,
            direct_total,
            isl_fixed,
            isl_gather,
            cubic: capacitance(&p.compute) / (m * m * e_ref),
            budget: p.cycle_budget(),
            dl_cap,
            isl_cap,
            st: st.clone(),
            set,
        }
    }

    fn rho_of(&self, r: &[f64]) -> Vec<f64> {
        let mut rho = self.rho_fixed.clone();
        for (i, &k) in self.frames.iter().enumerate() {
            rho[k] = 1.0 / r[i];
        }
        rho
    }

    /// Normalized residuals: processing per satellite, downlink, per edge.
    fn residuals(&self, rho: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
        let n = self.p.n_sats();
        let mut y = vec![0.0; n];
        for &k in &self.frames {
            let c = self.p.cycles(rho[k]);
            for (v, yv) in y.iter_mut().enumerate() {
                *yv += self.x[[k, v]] * c;
            }
        }
        let proc = y.iter().map(|&yn| yn / self.budget - 1.0).collect();
        let mut dl = self.direct_total;
        for &k in &self.frames {
            dl += self.processed[k] / rho[k];
        }
        let isl = (0..self.isl_fixed.len())
            .map(|i| {
                let mut l = self.isl_fixed[i];
                for &k in &self.frames {
                    l += self.isl_gather[i][k] / rho[k];
                }
                l / self.isl_cap - 1.0
            })
            .collect();
        (proc, dl / self.dl_cap - 1.0, isl)
    }

    fn rho_residuals(&self, rho: &[f64]) -> Vec<f64> {
        self.frames.iter().map(|&k| rho[k] / self.rho_max - 1.0).collect()
    }
}

impl Smooth for CompressionModel<'_> {
    fn value(&self, r: &[f64]) -> f64 {
        let rho = self.rho_of(r);
        let (proc, dl, isl) = self.residuals(&rho);
        let mut f = 0.0;
        for &k in &self.frames {
            f += self.gather[k] / rho[k];
        }
        let b3 = self.budget.powi(3);
        for (v, &g) in proc.iter().enumerate() {
            let yn = g + 1.0;
            f += self.cubic * b3 * yn.powi(3) + al_value(g, self.st.lambda_proc[v], self.st.alpha_proc[v]);
        }
        f += al_value(dl, self.st.lambda_dl, self.st.alpha_dl);
        for (i, &g) in isl.iter().enumerate() {
            f += al_value(g, self.st.lambda_isl[i], self.st.alpha_isl[i]);
        }
        for (i, g) in self.rho_residuals(&rho).into_iter().enumerate() {
            let k = self.frames[i];
            f += al_value(g, self.st.lambda_rho[k], self.st.alpha_rho[k]);
        }
        f
    }

    fn gradient(&self, r: &[f64], grad: &mut [f64]) {
        let rho = self.rho_of(r);
        let (proc, dl, isl) = self.residuals(&rho);
        let b3 = self.budget.powi(3);
        // Derivative of the processing terms with respect to Y_n / B.
        let dy: Vec<f64> = proc
            .iter()
            .enumerate()
            .map(|(v, &g)| {
                let yn = g + 1.0;
                3.0 * self.cubic * b3 * yn * yn + al_grad(g, self.st.lambda_proc[v], self.st.alpha_proc[v])
            })
            .collect();
        let ddl = al_grad(dl, self.st.lambda_dl, self.st.alpha_dl) / self.dl_cap;
        let disl: Vec<f64> = isl
            .iter()
            .enumerate()
            .map(|(i, &g)| al_grad(g, self.st.lambda_isl[i], self.st.alpha_isl[i]) / self.isl_cap)
            .collect();
        for (i, &k) in self.frames.iter().enumerate() {
            let rk = rho[k];
            let inv2 = 1.0 / (rk * rk);
            let slope = self.p.cycles_slope(rk) / self.budget;
            let mut d = -self.gather[k] * inv2;
            for (v, dyv) in dy.iter().enumerate() {
                let xv = self.x[[k, v]];
                if xv != 0.0 {
                    d += dyv * xv * slope;
                }
            }
            d -= ddl * self.processed[k] * inv2;
            for (e, w) in disl.iter().enumerate() {
                d -= w * self.isl_gather[e][k] * inv2;
            }
            d += al_grad(rk / self.rho_max - 1.0, self.st.lambda_rho[k], self.st.alpha_rho[k]) / self.rho_max;
            // Chain rule through ρ = 1/w.
            grad[i] = -d * rk * rk;
        }
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        self.set.project(v)
    }
}

/// The augmented-Lagrangian objective minimized by the compression block.
/// Variables are the inverse ratios `1 / ρ_k` for the frames with processed
/// bits, in frame order.
pub fn compression_objective<'a>(
    problem: &'a ProblemInstance,
    x: &Array2<f64>,
    rho: &Array1<f64>,
    state: &OptimizerState,
) -> impl Smooth + 'a {
    CompressionModel::new(problem, x, rho, state)
}

fn gate(lambda: &mut f64, alpha: &mut f64, g: f64, settings: &SolverSettings) {
    if g <= settings.tau_proc {
        *lambda = (*lambda + *alpha * g).max(0.0);
    } else {
        *alpha = (*alpha / settings.beta).min(settings.alpha_max);
    }
}

/// Minimizes the compression block for a fixed allocation and returns the
/// new ratios. Frames without processed bits keep their ratio.
pub fn pg_compression(
    problem: &ProblemInstance,
    x: &Array2<f64>,
    rho0: &Array1<f64>,
    state: &mut OptimizerState,
    settings: &SolverSettings,
    trace: &mut Vec<TraceRow>,
) -> Array1<f64> {
    let mut model = CompressionModel::new(problem, x, rho0, state);
    if model.frames.is_empty() {
        return rho0.clone();
    }
    let opts = SpgOptions {
        max_iter: settings.inner_max_iter,
        tol: settings.inner_tol,
        armijo: settings.armijo,
        shrink: settings.backtrack,
    };
    let mut r: Vec<f64> = model.frames.iter().map(|&k| 1.0 / rho0[k]).collect();
    let mut watch = StallWatch::default();
    for round in 0..settings.penalty_max_iter {
        let res = spg::minimize(&model, &r, opts);
        state.inner_iterations += res.iterations;
        if !res.converged {
            state.inner_cap_hit = true;
        }
        let change = res.x.iter().zip(&r).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        r = res.x;
        let rho = model.rho_of(&r);
        let (proc, dl, isl) = model.residuals(&rho);
        let mut worst: f64 = 0.0;
        let mut saturated = true;
        let mut note = |g: f64, a: f64| {
            if g > settings.tau_proc && a < settings.alpha_max {
                saturated = false;
            }
        };
        for (v, &g) in proc.iter().enumerate() {
            note(g, state.alpha_proc[v]);
        }
        note(dl, state.alpha_dl);
        for (i, &g) in isl.iter().enumerate() {
            note(g, state.alpha_isl[i]);
        }
        for (v, &g) in proc.iter().enumerate() {
            worst = worst.max(g);
            gate(&mut state.lambda_proc[v], &mut state.alpha_proc[v], g, settings);
            state.slack_proc[v] = (-g - state.lambda_proc[v] / state.alpha_proc[v]).max(0.0);
        }
        let proc_worst = worst;
        worst = worst.max(dl);
        gate(&mut state.lambda_dl, &mut state.alpha_dl, dl, settings);
        state.slack_dl = (-dl - state.lambda_dl / state.alpha_dl).max(0.0);
        let mut isl_worst: f64 = 0.0;
        for (i, &g) in isl.iter().enumerate() {
            isl_worst = isl_worst.max(g);
            gate(&mut state.lambda_isl[i], &mut state.alpha_isl[i], g, settings);
            state.slack_isl[i] = (-g - state.lambda_isl[i] / state.alpha_isl[i]).max(0.0);
        }
        worst = worst.max(isl_worst);
        for (i, g) in model.rho_residuals(&rho).into_iter().enumerate() {
            let k = model.frames[i];
            gate(&mut state.lambda_rho[k], &mut state.alpha_rho[k], g, settings);
            state.slack_rho[k] = (-g - state.lambda_rho[k] / state.alpha_rho[k]).max(0.0);
        }
        state.penalty_rounds += 1;
        trace.push(TraceRow {
            outer: state.outer_iterations,
            block: "compression",
            round,
            inner_iterations: res.iterations,
            objective: res.value,
            processing_residual: proc_worst.max(0.0),
            downlink_residual: dl.max(0.0),
            isl_residual: isl_worst.max(0.0),
        });
        model.st = state.clone();
        if worst <= settings.tau_proc && change <= settings.delta {
            break;
        }
        if worst > settings.tau_proc && (saturated || watch.stalled(worst)) {
            break;
        }
    }
    let rho = model.rho_of(&r);
    polish_rho(problem, x, &Array1::from(rho))
}

/// Smallest uniform scale-up of the ratios (capped at the maximum) that
/// meets the downlink and ISL constraints with the internal safety margin.
/// Returns the ratios unchanged when they already comply.
pub fn polish_rho(problem: &ProblemInstance, x: &Array2<f64>, rho: &Array1<f64>) -> Array1<f64> {
    let rho_max = problem.compute.rho_max;
    let ok = |r: &Array1<f64>| rate_ok(problem, x, r);
    if ok(rho) {
        return rho.clone();
    }
    let scaled = |s: f64| rho.mapv(|r| (r * s).min(rho_max));
    let lo_rho = rho.iter().cloned().fold(f64::INFINITY, f64::min).max(1.0);
    let mut hi = rho_max / lo_rho;
    if !ok(&scaled(hi)) {
        return scaled(hi);
    }
    let mut lo = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(&scaled(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    scaled(hi)
}

pub(crate) fn rate_ok(problem: &ProblemInstance, x: &Array2<f64>, rho: &Array1<f64>) -> bool {
    // Looser than the target used inside the blocks so that rounding in the
    // allocation projection never triggers a rescale.
    let margin = 1.0 - 0.5 * RATE_MARGIN;
    if problem.downlink_load(x, rho) > problem.downlink_capacity() * margin {
        return false;
    }
    let cap = problem.isl_capacity() * margin;
    (0..problem.isl_edges.len()).all(|i| problem.isl_load(i, x, rho) <= cap)
}
