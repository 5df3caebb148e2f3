//! Exhaustive grid search over shares and ratios for tiny instances. Used to
//! cross-check the descent solver.

use ndarray::{Array1, Array2};

use super::{optimal_frequencies, OptimizerError};
use crate::energy::{capacitance, e_gather, e_scatter, Plan, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Each frame is split into this many equal parts.
    pub share_units: usize,
    pub rho_step: f64,
}

impl GridSpec {
    /// Default resolution for a problem with `k` frames.
    pub fn for_frames(k: usize) -> Self {
        Self {
            share_units: if k <= 1 { 20 } else { 10 },
            rho_step: 0.25,
        }
    }
}

/// All ways to put `units` indistinguishable parts into `bins` bins.
fn compositions(units: usize, bins: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, bins: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if bins == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for i in 0..=left {
            cur.push(i);
            rec(left - i, bins - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(units, bins, &mut Vec::new(), &mut out);
    out
}

/// Upper bound on the number of grid points visited.
pub const MAX_GRID_POINTS: f64 = 2e9;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

struct Candidate {
    x: Vec<f64>,
    scatter: f64,
    /// Gather energy at ρ = 1.
    gather: f64,
    processed: f64,
}

/// Minimum-energy feasible plan on the grid. Intended for K ≤ 2 and at most
/// three satellites; the cost grows combinatorially beyond that and larger
/// problems are refused.
pub fn oracle_grid_search(problem: &ProblemInstance, grid: GridSpec, tau_proc: f64) -> Result<Plan, OptimizerError> {
    let n = problem.n_sats();
    let k = problem.k();
    let cols = n + 1;
    let rho_max = problem.compute.rho_max;
    let mut rhos = Vec::new();
    let mut r = 1.0;
    while r <= rho_max + 1e-12 {
        rhos.push(r.min(rho_max));
        r += grid.rho_step;
    }
    let points = binomial(grid.share_units + n, n).powi(k as i32) * (rhos.len() as f64).powi(k as i32);
    if n > 8 || points > MAX_GRID_POINTS {
        return Err(OptimizerError::OracleTooLarge { sats: n, frames: k });
    }
    let comps = compositions(grid.share_units, cols);
    let per_frame: Vec<Vec<Candidate>> = (0..k)
        .map(|kk| {
            let d = problem.demands[kk];
            let topo = &problem.snapshots[kk];
            comps
                .iter()
                .map(|c| {
                    let x: Vec<f64> = c.iter().map(|&u| d * u as f64 / grid.share_units as f64).collect();
                    let row = Array1::from(x.clone());
                    Candidate {
                        scatter: e_scatter(row.view(), topo, &problem.link),
                        gather: if x[..n].iter().all(|&v| v == 0.0) {
                            0.0
                        } else {
                            e_gather(row.view(), 1.0, topo, &problem.link)
                        },
                        processed: x[..n].iter().sum(),
                        x,
                    }
                })
                .collect()
        })
        .collect();

    let nu = capacitance(&problem.compute);
    let m = k as f64 * problem.compute.n_cores as f64 * problem.slot_len_s;
    let budget = problem.cycle_budget() * (1.0 + tau_proc);
    let dl_cap = problem.downlink_capacity();
    let isl_cap = problem.isl_capacity();
    let n_edges = problem.isl_edges.len();

    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut choice = vec![0usize; k];
    let mut rchoice = vec![0usize; k];
    let total = comps.len().pow(k as u32);
    let rtotal = rhos.len().pow(k as u32);
    for idx in 0..total {
        let mut t = idx;
        for c in choice.iter_mut() {
            *c = t % comps.len();
            t /= comps.len();
        }
        for ridx in 0..rtotal {
            let mut t = ridx;
            for c in rchoice.iter_mut() {
                *c = t % rhos.len();
                t /= rhos.len();
            }
            let mut energy = 0.0;
            let mut dl = 0.0;
            let mut y = [0.0f64; 8];
            for kk in 0..k {
                let cand = &per_frame[kk][choice[kk]];
                let rho = rhos[rchoice[kk]];
                energy += cand.scatter + cand.gather / rho;
                dl += cand.x[n] + cand.processed / rho;
                let c = problem.cycles(rho);
                for (yv, xv) in y.iter_mut().zip(&cand.x[..n]) {
                    *yv += xv * c;
                }
            }
            if dl > dl_cap || y[..n].iter().any(|&yn| yn > budget) {
                continue;
            }
            let mut isl_ok = true;
            for e in 0..n_edges {
                let mut load = 0.0;
                for kk in 0..k {
                    let cand = &per_frame[kk][choice[kk]];
                    let rho = rhos[rchoice[kk]];
                    let u = problem.usage(e, kk);
                    if u.direct {
                        load += cand.x[n];
                    }
                    for v in 0..n {
                        if u.scatter[v] {
                            load += cand.x[v];
                        }
                        if u.gather[v] {
                            load += cand.x[v] / rho;
                        }
                    }
                }
                if load > isl_cap {
                    isl_ok = false;
                    break;
                }
            }
            if !isl_ok {
                continue;
            }
            for &yn in &y[..n] {
                energy += nu * yn.powi(3) / (m * m);
            }
            if best.as_ref().is_none_or(|b| energy < b.0) {
                best = Some((energy, choice.clone(), rchoice.clone()));
            }
        }
    }

    match best {
        None => Err(OptimizerError::Infeasible {
            binding: "no feasible grid point".into(),
        }),
        Some((_, choice, rchoice)) => {
            let mut x = Array2::zeros((k, cols));
            let mut rho = Array1::ones(k);
            for kk in 0..k {
                for j in 0..cols {
                    x[[kk, j]] = per_frame[kk][choice[kk]].x[j];
                }
                rho[kk] = rhos[rchoice[kk]];
            }
            let (f, _) = optimal_frequencies(problem, &x, &rho);
            Ok(Plan::evaluate(x, rho, f, problem, tau_proc))
        }
    }
}
