//! Euclidean projections: simplex rows, half-spaces and their intersection.

/// Projects `v` onto `{z >= 0, sum z = total}` in place.
pub fn project_simplex(v: &mut [f64], total: f64) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - total) / (i + 1) as f64;
        if i + 1 == n || sorted[i + 1] <= t {
            theta = t;
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

/// `a · z <= c` with `a` stored densely.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    pub a: Vec<f64>,
    pub c: f64,
    norm2: f64,
}

impl HalfSpace {
    pub fn new(a: Vec<f64>, c: f64) -> Self {
        let norm2 = a.iter().map(|v| v * v).sum();
        Self { a, c, norm2 }
    }

    /// Same half-space with the largest coefficient scaled to one.
    pub fn normalized(a: Vec<f64>, c: f64) -> Self {
        let norm = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm == 0.0 {
            return Self::new(a, c.signum());
        }
        Self::new(a.into_iter().map(|v| v / norm).collect(), c / norm)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.a.iter().zip(z).map(|(a, z)| a * z).sum()
    }

    /// Normalized violation of `z`, 0 if satisfied.
    pub fn violation(&self, z: &[f64]) -> f64 {
        if self.norm2 == 0.0 {
            return (-self.c).max(0.0);
        }
        ((self.value(z) - self.c) / self.norm2.sqrt()).max(0.0)
    }
}

/// Product of simplices (one per active row of a row-major matrix), or a
/// box, intersected with a few half-spaces.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    pub cols: usize,
    /// Row indices constrained to the unit simplex. Other rows are held at 0.
    pub rows: Vec<usize>,
    /// When set, every coordinate is clamped to this interval and `rows` is
    /// ignored.
    pub bounds: Option<(f64, f64)>,
    pub halfspaces: Vec<HalfSpace>,
    pub max_iter: usize,
    pub tol: f64,
}

impl FeasibleSet {
    fn project_rows(&self, z: &mut [f64]) {
        if let Some((lo, hi)) = self.bounds {
            for v in z.iter_mut() {
                *v = v.clamp(lo, hi);
            }
            return;
        }
        for &r in &self.rows {
            project_simplex(&mut z[r * self.cols..(r + 1) * self.cols], 1.0);
        }
    }

    /// Smallest value of `a · z` over the simplex product or box.
    fn min_value(&self, h: &HalfSpace) -> f64 {
        if let Some((lo, hi)) = self.bounds {
            return h.a.iter().map(|&a| (a * lo).min(a * hi)).sum();
        }
        self.rows
            .iter()
            .map(|&r| {
                h.a[r * self.cols..(r + 1) * self.cols]
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    /// Loosens every half-space that no point of the base set can satisfy to
    /// the smallest attainable level, so the intersection is never empty.
    /// Returns whether any half-space was loosened.
    pub fn relax_unattainable(&mut self) -> bool {
        let mut relaxed = false;
        for i in 0..self.halfspaces.len() {
            let floor = self.min_value(&self.halfspaces[i]);
            let h = &mut self.halfspaces[i];
            if h.c < floor {
                h.c = floor + 1e-12 * floor.abs();
                relaxed = true;
            }
        }
        relaxed
    }

    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.halfspaces.iter().map(|h| h.violation(z)).fold(0.0, f64::max)
    }

    /// Dykstra's alternating projection. The result always lies exactly in
    /// the simplex product or box; half-space violations are below `tol` unless the
    /// iteration cap is reached or the set is empty.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut z = v.to_vec();
        self.project_rows(&mut z);
        if self.max_violation(&z) == 0.0 {
            return z;
        }
        let mut x = v.to_vec();
        let mut beta = vec![0.0; self.halfspaces.len()];
        let mut p_s = vec![0.0; v.len()];
        let mut y = vec![0.0; v.len()];
        for _ in 0..self.max_iter {
            for (h, b) in self.halfspaces.iter().zip(beta.iter_mut()) {
                if h.norm2 == 0.0 {
                    continue;
                }
                let mut ay = 0.0;
                for (i, a) in h.a.iter().enumerate() {
                    x[i] += *b * a;
                    ay += a * x[i];
                }
                let t = ((ay - h.c) / h.norm2).max(0.0);
                if t != 0.0 {
                    for (xi, a) in x.iter_mut().zip(&h.a) {
                        *xi -= t * a;
                    }
                }
                *b = t;
            }
            for i in 0..x.len() {
                y[i] = x[i] + p_s[i];
            }
            let prev = std::mem::take(&mut z);
            z = y.clone();
            self.project_rows(&mut z);
            let mut change: f64 = 0.0;
            for i in 0..x.len() {
                p_s[i] = y[i] - z[i];
                change = change.max((z[i] - prev[i]).abs());
            }
            x.copy_from_slice(&z);
            if self.max_violation(&z) <= self.tol && change <= self.tol {
                return z;
            }
        }
        if self.max_violation(&z) <= self.tol {
            return z;
        }
        // Dykstra stalls on sets with empty interior; fall back to exact
        // coordinate ascent on the half-space multipliers.
        self.project_dual(v)
    }

    /// `P(v - Σ μ_i a_i)` onto the simplex product or box.
    fn shifted(&self, v: &[f64], mu: &[f64]) -> Vec<f64> {
        let mut w = v.to_vec();
        for (h, &m) in self.halfspaces.iter().zip(mu) {
            if m != 0.0 {
                for (w, a) in w.iter_mut().zip(&h.a) {
                    *w -= m * a;
                }
            }
        }
        self.project_rows(&mut w);
        w
    }

    fn project_dual(&self, v: &[f64]) -> Vec<f64> {
        let m = self.halfspaces.len();
        let mut mu = vec![0.0; m];
        let mut z = self.shifted(v, &mu);
        for _ in 0..self.max_iter {
            let mut moved: f64 = 0.0;
            for i in 0..m {
                let h = &self.halfspaces[i];
                if h.norm2 == 0.0 {
                    continue;
                }
                let excess = |t: f64, mu: &mut Vec<f64>| {
                    mu[i] = t;
                    h.value(&self.shifted(v, mu)) - h.c
                };
                let old = mu[i];
                let t = if excess(0.0, &mut mu) <= 0.0 {
                    0.0
                } else {
                    // The excess is nonincreasing in the multiplier.
                    let mut hi = old.max(1e-12 / h.norm2.sqrt());
                    while excess(hi, &mut mu) > 0.0 && hi < 1e300 {
                        hi *= 2.0;
                    }
                    let mut lo = 0.0;
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if excess(mid, &mut mu) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    hi
                };
                mu[i] = t;
                moved = moved.max((t - old).abs() * h.norm2.sqrt());
            }
            z = self.shifted(v, &mu);
            if self.max_violation(&z) <= self.tol && moved <= self.tol {
                break;
            }
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_cases() {
        let mut v = vec![0.5, 0.5];
        project_simplex(&mut v, 1.0);
        assert_eq!(v, vec![0.5, 0.5]);
        let mut v = vec![2.0, 0.0, -1.0];
        project_simplex(&mut v, 1.0);
        assert_eq!(v, vec![1.0, 0.0, 0.0]);
        let mut v = vec![0.3, 0.3, 0.3];
        project_simplex(&mut v, 1.0);
        for x in v {
            assert_relative_eq!(x, 1.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn dykstra_matches_closed_form() {
        // Simplex in R^3 with z0 <= 0.2: the projection of (1,0,0) is
        // (0.2, 0.4, 0.4).
        let set = FeasibleSet {
            cols: 3,
            rows: vec![0],
            bounds: None,
            halfspaces: vec![HalfSpace::new(vec![1.0, 0.0, 0.0], 0.2)],
            max_iter: 10_000,
            tol: 1e-13,
        };
        let z = set.project(&[1.0, 0.0, 0.0]);
        assert_relative_eq!(z[0], 0.2, epsilon = 1e-9);
        assert_relative_eq!(z[1], 0.4, epsilon = 1e-9);
        assert_relative_eq!(z[2], 0.4, epsilon = 1e-9);
    }

    #[test]
    fn box_with_halfspace() {
        // Unit box with z0 + z1 <= 1: (1, 1) projects to (0.5, 0.5).
        let set = FeasibleSet {
            cols: 2,
            rows: Vec::new(),
            bounds: Some((0.0, 1.0)),
            halfspaces: vec![HalfSpace::normalized(vec![2.0, 2.0], 2.0)],
            max_iter: 10_000,
            tol: 1e-13,
        };
        let z = set.project(&[1.0, 1.0]);
        assert_relative_eq!(z[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(z[1], 0.5, epsilon = 1e-9);
        assert_eq!(set.project(&[2.0, -1.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn unattainable_halfspace_is_loosened() {
        let mut set = FeasibleSet {
            cols: 2,
            rows: vec![0],
            bounds: None,
            halfspaces: vec![HalfSpace::new(vec![1.0, 2.0], 0.5)],
            max_iter: 10_000,
            tol: 1e-13,
        };
        assert!(set.relax_unattainable());
        let z = set.project(&[0.0, 1.0]);
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(z[1], 0.0, epsilon = 1e-9);
        assert!(!set.relax_unattainable());
    }

    #[test]
    fn dual_projection_on_a_face() {
        // The half-space only admits the face z0 = 0 of the simplex.
        let set = FeasibleSet {
            cols: 3,
            rows: vec![0],
            bounds: None,
            halfspaces: vec![HalfSpace::new(vec![1.0, 0.0, 0.0], 0.0)],
            max_iter: 10_000,
            tol: 1e-13,
        };
        let z = set.project_dual(&[1e5, -1e5, 3.0]);
        assert!(set.max_violation(&z) <= 1e-13);
        assert_relative_eq!(z[1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(z[2], 1.0, epsilon = 1e-9);
        let d = set.project_dual(&[0.9, 0.3, 0.1]);
        assert_relative_eq!(d[1], 0.6, epsilon = 1e-9);
        assert_relative_eq!(d[2], 0.4, epsilon = 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn simplex_projection_is_optimal(v in proptest::collection::vec(-2.0f64..2.0, 1..8), w in proptest::collection::vec(0.0f64..1.0, 8)) {
                let mut p = v.clone();
                project_simplex(&mut p, 1.0);
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|&x| x >= 0.0));
                // Any other simplex point is at least as far from v.
                let mut q: Vec<f64> = w[..v.len()].to_vec();
                project_simplex(&mut q, 1.0);
                let d = |a: &[f64]| a.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                prop_assert!(d(&p) <= d(&q) + 1e-12);
            }
        }
    }
}
