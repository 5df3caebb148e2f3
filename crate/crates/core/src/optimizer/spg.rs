//! Spectral projected gradient with Armijo backtracking.

pub trait Smooth {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);
    fn project(&self, v: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct SpgOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient step moves less than this (sup norm).
    pub tol: f64,
    pub armijo: f64,
    pub shrink: f64,
}

#[derive(Debug, Clone)]
pub struct SpgResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;
/// Window of the nonmonotone (max of recent values) Armijo reference.
const MEMORY: usize = 10;

/// Minimizes `f` over its feasible set from a feasible (or projected) start.
pub fn minimize<F: Smooth>(f: &F, x0: &[f64], opts: SpgOptions) -> SpgResult {
    let n = x0.len();
    let mut x = f.project(x0);
    let mut fx = f.value(&x);
    let mut g = vec![0.0; n];
    f.gradient(&x, &mut g);
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = if gmax > 0.0 {
        (1.0 / gmax).clamp(STEP_MIN, STEP_MAX)
    } else {
        1.0
    };
    let mut g_new = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut stalled = 0;
    let mut recent = std::collections::VecDeque::with_capacity(MEMORY);
    recent.push_back(fx);
    let mut best = (x.clone(), fx);
    for it in 0..opts.max_iter {
        for i in 0..n {
            v[i] = x[i] - step * g[i];
        }
        let p = f.project(&v);
        let d: Vec<f64> = p.iter().zip(&x).map(|(p, x)| p - x).collect();
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if dmax <= opts.tol {
            // A short spectral step can come from stiffness rather than
            // stationarity; confirm with the unit-step projected gradient.
            let unit: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - g).collect();
            let pg = f
                .project(&unit)
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (p, x)| m.max((p - x).abs()));
            if pg <= opts.tol {
                return finish(best, it, true);
            }
        }
        let slope: f64 = d.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            // Projection noise; the point is stationary to working precision.
            return finish(best, it, true);
        }
        let reference = recent.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + t * d[i];
            }
            let ft = f.value(&trial);
            if ft <= reference + opts.armijo * t * slope {
                accepted = true;
                if best.1 - ft <= 1e-15 * best.1.abs().max(1e-300) {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                fx = ft;
                break;
            }
            t *= opts.shrink;
        }
        if !accepted || stalled >= 20 * MEMORY {
            return finish(best, it, true);
        }
        if recent.len() == MEMORY {
            recent.pop_front();
        }
        recent.push_back(fx);
        if fx < best.1 {
            best = (trial.clone(), fx);
        }
        f.gradient(&trial, &mut g_new);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..n {
            let s = trial[i] - x[i];
            let y = g_new[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(STEP_MIN, STEP_MAX)
        } else {
            STEP_MAX.min(step * 10.0)
        };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
    }
    finish(best, opts.max_iter, false)
}

fn finish((x, value): (Vec<f64>, f64), iterations: usize, converged: bool) -> SpgResult {
    SpgResult {
        x,
        value,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad {
        target: Vec<f64>,
        weights: Vec<f64>,
    }

    impl Smooth for Quad {
        fn value(&self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.target)
                .zip(&self.weights)
                .map(|((x, t), w)| 0.5 * w * (x - t).powi(2))
                .sum()
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            for i in 0..x.len() {
                g[i] = self.weights[i] * (x[i] - self.target[i]);
            }
        }
        fn project(&self, v: &[f64]) -> Vec<f64> {
            v.iter().map(|x| x.clamp(0.0, 1.0)).collect()
        }
    }

    #[test]
    fn box_constrained_quadratic() {
        let q = Quad {
            target: vec![2.0, -1.0, 0.3],
            weights: vec![1.0, 100.0, 1e4],
        };
        let r = minimize(
            &q,
            &[0.5, 0.5, 0.5],
            SpgOptions {
                max_iter: 1000,
                tol: 1e-12,
                armijo: 1e-4,
                shrink: 0.5,
            },
        );
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-12);
        assert!(r.x[1].abs() < 1e-12);
        assert!((r.x[2] - 0.3).abs() < 1e-9);
    }
}
