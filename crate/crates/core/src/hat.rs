//! Piecewise-linear functions on a window `0..width`, parametrised by their
//! values at an ordered set of knots that contains both endpoints.
//!
//! Both active-set solvers work in this parametrisation: for a fixed knot set
//! the map from knot values to the function is linear (a "hat" basis), and the
//! induced Gram matrices are tridiagonal.

/// Ordered knot offsets within `0..width`; always holds `0` and `width - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct KnotGrid {
    width: usize,
    knots: Vec<usize>,
}

impl KnotGrid {
    /// Endpoints plus the given interior offsets (deduplicated, sorted).
    pub fn new(width: usize, interior: impl IntoIterator<Item = usize>) -> Self {
        assert!(width >= 1);
        let mut knots: Vec<usize> = interior.into_iter().filter(|&k| k > 0 && k + 1 < width).collect();
        knots.push(0);
        knots.push(width - 1);
        knots.sort_unstable();
        knots.dedup();
        Self { width, knots }
    }

    pub fn knots(&self) -> &[usize] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.knots.binary_search(&k).is_ok()
    }

    pub fn insert(&mut self, k: usize) {
        if let Err(pos) = self.knots.binary_search(&k) {
            self.knots.insert(pos, k);
        }
    }

    /// Removes the knot at position `idx` (must be interior).
    pub fn remove_at(&mut self, idx: usize) {
        assert!(idx > 0 && idx + 1 < self.knots.len());
        self.knots.remove(idx);
    }

    /// Calls `f(z, j, lambda)` for every window point `z`, where `z` lies in
    /// segment `[knots[j], knots[j+1]]` with `f(z) = (1-lambda) theta_j + lambda theta_{j+1}`.
    /// For a single-point window the call is `f(0, 0, 0.0)`.
    #[inline]
    fn for_each_point(&self, mut f: impl FnMut(usize, usize, f64)) {
        if self.knots.len() == 1 {
            f(0, 0, 0.0);
            return;
        }
        let last_seg = self.knots.len() - 2;
        for (j, seg) in self.knots.windows(2).enumerate() {
            let (a, b) = (seg[0], seg[1]);
            let len = (b - a) as f64;
            let end = if j == last_seg { b + 1 } else { b };
            for z in a..end {
                f(z, j, (z - a) as f64 / len);
            }
        }
    }

    /// Function values on the whole window.
    pub fn expand(&self, theta: &[f64]) -> Vec<f64> {
        debug_assert_eq!(theta.len(), self.knots.len());
        let mut out = vec![0.0; self.width];
        self.for_each_point(|z, j, lam| {
            out[z] = if lam == 0.0 { theta[j] } else { (1.0 - lam) * theta[j] + lam * theta[j + 1] };
        });
        out
    }

    /// Values of a full-window vector at the knots.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.knots.iter().map(|&k| values[k]).collect()
    }

    /// `B^T v`.
    pub fn pull_back(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.knots.len()];
        self.for_each_point(|z, j, lam| {
            out[j] += (1.0 - lam) * v[z];
            if lam != 0.0 {
                out[j + 1] += lam * v[z];
            }
        });
        out
    }

    /// `B^T diag(d) B` as (diagonal, superdiagonal).
    pub fn gram(&self, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = self.knots.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        self.for_each_point(|z, j, lam| {
            let w = d[z];
            diag[j] += (1.0 - lam) * (1.0 - lam) * w;
            if lam != 0.0 {
                diag[j + 1] += lam * lam * w;
                off[j] += lam * (1.0 - lam) * w;
            }
        });
        (diag, off)
    }

    /// Slope changes at the interior knots: entry `i` belongs to `knots[i + 1]`.
    /// Nonpositive entries everywhere means the function is concave.
    pub fn kinks(&self, theta: &[f64]) -> Vec<f64> {
        let slopes: Vec<f64> =
            self.knots.windows(2).zip(theta.windows(2)).map(|(k, t)| (t[1] - t[0]) / (k[1] - k[0]) as f64).collect();
        slopes.windows(2).map(|s| s[1] - s[0]).collect()
    }
}

/// Discrete Laplacian `f(z+1) - 2 f(z) + f(z-1)` at the interior points of a vector;
/// entry `i` belongs to point `i + 1`.
pub(crate) fn laplacian(f: &[f64]) -> Vec<f64> {
    f.windows(3).map(|w| (w[2] - w[1]) - (w[1] - w[0])).collect()
}

/// Solves a symmetric tridiagonal system. Returns `None` if a pivot vanishes.
pub(crate) fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let m = diag.len();
    debug_assert_eq!(rhs.len(), m);
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut pivot = diag[0];
    if pivot.abs() < f64::MIN_POSITIVE || !pivot.is_finite() {
        return None;
    }
    d[0] = rhs[0] / pivot;
    for i in 1..m {
        c[i - 1] = off[i - 1] / pivot;
        pivot = diag[i] - off[i - 1] * c[i - 1];
        if pivot.abs() < f64::MIN_POSITIVE || !pivot.is_finite() {
            return None;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / pivot;
    }
    for i in (0..m - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Largest step `t` in `[0, 1]` keeping `(1-t) old + t new` concave, given the
/// kinks of both endpoints (with `old` concave). Returns the step and, if a
/// constraint binds before `t = 1`, the index of the first kink reaching zero.
pub(crate) fn concave_step(old_kinks: &[f64], new_kinks: &[f64]) -> (f64, Option<usize>) {
    let mut best = (1.0, None);
    for (i, (&ko, &kn)) in old_kinks.iter().zip(new_kinks).enumerate() {
        if kn > 0.0 {
            let ko = ko.min(0.0);
            let t = -ko / (kn - ko);
            if t < best.0 {
                best = (t, Some(i));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_and_pull_back_are_adjoint() {
        let grid = KnotGrid::new(7, [2, 5]);
        let theta = [1.0, -2.0, 0.5, 3.0];
        let v = [0.3, -1.0, 2.0, 0.7, 0.1, -0.4, 1.1];
        let f = grid.expand(&theta);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[2], -2.0);
        assert!((f[1] - -0.5).abs() < 1e-15);
        let lhs: f64 = f.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = grid.pull_back(&v).iter().zip(&theta).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn gram_matches_dense_product() {
        let grid = KnotGrid::new(6, [1, 4]);
        let d = [1.0, 2.0, 0.5, 3.0, 1.5, 0.25];
        let (diag, off) = grid.gram(&d);
        let m = grid.len();
        let columns: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut e = vec![0.0; m];
                e[j] = 1.0;
                grid.expand(&e)
            })
            .collect();
        for a in 0..m {
            for b in 0..m {
                let dense: f64 = (0..6).map(|z| columns[a][z] * d[z] * columns[b][z]).sum();
                let tri = if a == b {
                    diag[a]
                } else if a + 1 == b {
                    off[a]
                } else if b + 1 == a {
                    off[b]
                } else {
                    0.0
                };
                assert!((dense - tri).abs() < 1e-12, "{a},{b}");
            }
        }
    }

    #[test]
    fn tridiagonal_solve() {
        let diag = [4.0, 5.0, 6.0];
        let off = [1.0, 2.0];
        let x = solve_tridiagonal(&diag, &off, &[6.0, 17.0, 22.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_window() {
        let grid = KnotGrid::new(1, []);
        assert_eq!(grid.knots(), &[0]);
        assert_eq!(grid.expand(&[2.5]), vec![2.5]);
        assert_eq!(grid.gram(&[3.0]), (vec![3.0], vec![]));
        assert!(grid.kinks(&[2.5]).is_empty());
    }

    #[test]
    fn concave_step_stops_at_first_binding_kink() {
        let (t, idx) = concave_step(&[-1.0, -1.0], &[1.0, 3.0]);
        assert_eq!(idx, Some(1));
        assert!((t - 0.25).abs() < 1e-15);
        assert_eq!(concave_step(&[-1.0], &[-0.5]), (1.0, None));
    }
}
