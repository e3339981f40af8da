//! Maximisation of the weighted log-concave criterion
//!
//! ```text
//! Phi(psi) = sum_z w(z) psi(z) - sum_z exp(psi(z))
//! ```
//!
//! over concave `psi` on the window `[z1, zm]` of the weights, with slope
//! changes allowed only at a candidate set of points. With empirical weights
//! this is the log-concave MLE; with a target pmf as weights it is the KL
//! projection; with EM responsibilities it is the mixture M-step.
//!
//! The maximiser has unit mass automatically, so no normalisation constraint
//! is imposed while iterating.

use serde::{Deserialize, Serialize};

use crate::concave_ls::{fit_concave_ls, LsProblem, LS_TOL};
use crate::error::{Error, Result};
use crate::fenchel;
use crate::hat::{concave_step, laplacian, solve_tridiagonal, KnotGrid};
use crate::pmf::{Counts, Pmf};

/// Slope changes below `-KNOT_TOL` mark a knot.
pub const KNOT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stopping tolerance on the optimality gap.
    pub tol: f64,
    /// Maximum number of knot insertions.
    pub max_outer: usize,
    /// Maximum Newton steps per knot set.
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_outer: 200, max_newton: 100 }
    }
}

/// Weights on a contiguous window together with the points allowed to carry knots.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedProblem {
    origin: i64,
    weights: Vec<f64>,
    candidate_knots: Vec<i64>,
}

impl WeightedProblem {
    /// `weights` must be nonnegative with positive end entries and unit sum
    /// (within `1e-9`; the vector is rescaled to exact unit sum). Candidate
    /// knots must be points of positive weight; the window ends are added.
    pub fn new(origin: i64, weights: Vec<f64>, candidate_knots: Vec<i64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty weight vector"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights must be nonnegative and finite"));
        }
        if weights[0] <= 0.0 || weights[weights.len() - 1] <= 0.0 {
            return Err(Error::invalid("weights must be positive at both window ends"));
        }
        let total = crate::accum::sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let last = origin + weights.len() as i64 - 1;
        let mut candidate_knots = candidate_knots;
        candidate_knots.push(origin);
        candidate_knots.push(last);
        candidate_knots.sort_unstable();
        candidate_knots.dedup();
        for &k in &candidate_knots {
            if k < origin || k > last || weights[(k - origin) as usize] <= 0.0 {
                return Err(Error::invalid(format!("candidate knot {k} is not a point of positive weight")));
            }
        }
        Ok(Self { origin, weights, candidate_knots })
    }

    /// Every point of positive weight is a candidate.
    pub fn from_pmf(p: &Pmf) -> Self {
        let candidate_knots = p.iter().filter(|&(_, w)| w > 0.0).map(|(z, _)| z).collect();
        Self::new(p.origin(), p.probs().to_vec(), candidate_knots).expect("a valid pmf is a valid problem")
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn candidate_knots(&self) -> &[i64] {
        &self.candidate_knots
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }
}

/// Per-knot flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnotFlags {
    /// Both neighbours lie inside the window.
    pub internal: bool,
    /// The next point is also a knot.
    pub double: bool,
    /// Both neighbours are knots.
    pub triple: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnotSet {
    pub points: Vec<i64>,
    pub flags: Vec<KnotFlags>,
}

impl KnotSet {
    /// Builds the set from strictly increasing knot locations on `[first, last]`.
    pub fn from_points(points: Vec<i64>, first: i64, last: i64) -> Self {
        let has = |z: i64| points.binary_search(&z).is_ok();
        let flags = points
            .iter()
            .map(|&k| KnotFlags {
                internal: k > first && k < last,
                double: has(k + 1),
                triple: has(k - 1) && has(k + 1),
            })
            .collect();
        Self { points, flags }
    }

    pub fn contains(&self, z: i64) -> bool {
        self.points.binary_search(&z).is_ok()
    }

    pub fn internal(&self) -> impl Iterator<Item = i64> + '_ {
        self.points.iter().zip(&self.flags).filter(|(_, f)| f.internal).map(|(&k, _)| k)
    }
}

/// A fitted concave log-pmf on `origin..=origin + psi.len() - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLogConcave {
    pub origin: i64,
    pub psi: Vec<f64>,
    /// `exp(psi)` rescaled to exact unit mass.
    pub pmf: Vec<f64>,
    pub knots: Vec<i64>,
    pub objective: f64,
    pub fenchel_gap: f64,
    pub iterations: usize,
    /// Criterion value after each knot insertion.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

impl FittedLogConcave {
    fn from_psi(origin: i64, psi: Vec<f64>, weights: &[f64], iterations: usize, trace: Vec<f64>) -> Self {
        let raw: Vec<f64> = psi.iter().map(|s| s.exp()).collect();
        let total = crate::accum::sum(raw.iter().copied());
        let pmf = raw.iter().map(|p| p / total).collect();
        let mask = fenchel::knot_mask(&psi);
        let knots = mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| origin + i as i64).collect();
        let report = fenchel::report(origin, &psi, weights, f64::INFINITY);
        Self {
            origin,
            objective: criterion(&psi, weights),
            fenchel_gap: report.gap(),
            psi,
            pmf,
            knots,
            iterations,
            objective_trace: trace,
        }
    }

    pub fn last(&self) -> i64 {
        self.origin + self.psi.len() as i64 - 1
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf::from_weights(self.origin, self.pmf.clone()).expect("fitted pmf has positive mass")
    }

    /// Fitted probability at `z`, zero outside the window.
    pub fn prob(&self, z: i64) -> f64 {
        if z < self.origin || z > self.last() {
            0.0
        } else {
            self.pmf[(z - self.origin) as usize]
        }
    }

    pub fn knot_set(&self) -> KnotSet {
        KnotSet::from_points(self.knots.clone(), self.origin, self.last())
    }
}

/// `sum w psi - sum exp(psi)` over the window.
pub fn criterion(psi: &[f64], weights: &[f64]) -> f64 {
    let mut acc = crate::accum::Neumaier::new();
    for (s, w) in psi.iter().zip(weights) {
        if *w > 0.0 {
            acc.add(w * s);
        }
        acc.add(-s.exp());
    }
    acc.value()
}

/// Knots of a fit: window ends plus interior points where the log-pmf bends.
pub fn knots_of(fit: &FittedLogConcave) -> KnotSet {
    fit.knot_set()
}

struct Engine<'a> {
    weights: &'a [f64],
    opts: SolverOptions,
}

impl Engine<'_> {
    fn objective(&self, grid: &KnotGrid, theta: &[f64]) -> f64 {
        let psi = grid.expand(theta);
        if psi.iter().any(|s| !s.is_finite() || *s > 700.0) {
            return f64::NEG_INFINITY;
        }
        criterion(&psi, self.weights)
    }

    /// Maximises the criterion over functions linear between the grid knots.
    fn newton(&self, grid: &KnotGrid, start: &[f64]) -> Vec<f64> {
        let mut theta = start.to_vec();
        let mut value = self.objective(grid, &theta);
        let mut last_decrement = f64::INFINITY;
        for _ in 0..self.opts.max_newton {
            let psi = grid.expand(&theta);
            let p: Vec<f64> = psi.iter().map(|s| s.exp()).collect();
            let resid: Vec<f64> = self.weights.iter().zip(&p).map(|(w, q)| w - q).collect();
            let grad = grid.pull_back(&resid);
            let (diag, off) = grid.gram(&p);
            let Some(step) = solve_tridiagonal(&diag, &off, &grad) else {
                break;
            };
            let decrement: f64 = grad.iter().zip(&step).map(|(g, s)| g * s).sum();
            if decrement.is_nan() || decrement <= 1e-30 {
                break;
            }
            if decrement < 1e-12 {
                // Quadratic regime: the criterion cannot resolve the improvement any more.
                if decrement > 0.5 * last_decrement {
                    break;
                }
                for (t, s) in theta.iter_mut().zip(&step) {
                    *t += s;
                }
                value = self.objective(grid, &theta);
                last_decrement = decrement;
                continue;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + alpha * s).collect();
                let v = self.objective(grid, &trial);
                if v >= value + 1e-4 * alpha * decrement {
                    theta = trial;
                    value = v;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            last_decrement = decrement;
        }
        theta
    }

    /// Newton on the grid followed by back-tracking towards the concave start
    /// until concavity holds; knots whose slope change reaches zero are dropped.
    fn optimise(&self, grid: &mut KnotGrid, mut current: Vec<f64>) -> Vec<f64> {
        loop {
            let proposal = self.newton(grid, &current);
            let (t, binding) = concave_step(&grid.kinks(&current), &grid.kinks(&proposal));
            match binding {
                None => return proposal,
                Some(i) => {
                    for (c, p) in current.iter_mut().zip(&proposal) {
                        *c += t * (p - *c);
                    }
                    grid.remove_at(i + 1);
                    current.remove(i + 1);
                }
            }
        }
    }
}

/// Maximises the weighted criterion over concave log-pmfs with knots in the
/// candidate set.
pub fn fit_weighted(problem: &WeightedProblem, opts: &SolverOptions) -> Result<FittedLogConcave> {
    let w = problem.weights();
    let origin = problem.origin();
    let width = problem.width();
    if width <= 2 {
        let psi = w.iter().map(|x| x.ln()).collect();
        return Ok(FittedLogConcave::from_psi(origin, psi, w, 0, Vec::new()));
    }

    let candidates: Vec<usize> =
        problem.candidate_knots().iter().map(|&k| (k - origin) as usize).filter(|&k| k > 0 && k + 1 < width).collect();

    // Start from a concave least-squares fit to the log weights.
    let floor = 1e-3 * w.iter().copied().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
    let targets: Vec<f64> = w.iter().map(|&x| x.max(floor).ln()).collect();
    let init = fit_concave_ls(&LsProblem::unrestricted(0, vec![1.0; width], targets), LS_TOL)?.g_star;
    let bends = laplacian(&init);
    let mut grid = KnotGrid::new(width, candidates.iter().copied().filter(|&k| bends[k - 1] < -KNOT_TOL));
    let start = grid.restrict(&init);

    let engine = Engine { weights: w, opts: *opts };
    let mut theta = engine.optimise(&mut grid, start);
    let mut trace = vec![criterion(&grid.expand(&theta), w)];
    let mut iterations = 0;

    loop {
        let psi = grid.expand(&theta);
        let gaps = fenchel::cumulative_gaps(&psi, w);
        let worst = candidates
            .iter()
            .filter(|&&k| !grid.contains(k))
            .map(|&k| (k, gaps[k]))
            .filter(|&(_, d)| d < -opts.tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((added, _)) = worst else {
            let fit = FittedLogConcave::from_psi(origin, psi, w, iterations, trace);
            if fit.fenchel_gap > opts.tol {
                return Err(Error::SolverFailure { iterations, gap: fit.fenchel_gap, best_psi: fit.psi });
            }
            return Ok(fit);
        };
        if iterations >= opts.max_outer {
            let fit = FittedLogConcave::from_psi(origin, psi, w, iterations, trace);
            return Err(Error::SolverFailure { iterations, gap: fit.fenchel_gap, best_psi: fit.psi });
        }
        iterations += 1;
        grid.insert(added);
        let current = grid.restrict(&psi);
        theta = engine.optimise(&mut grid, current);
        trace.push(criterion(&grid.expand(&theta), w));
    }
}

/// Log-concave maximum likelihood estimate from counts.
pub fn fit_mle(counts: &Counts, opts: &SolverOptions) -> Result<FittedLogConcave> {
    if counts.n() < 3 {
        return Err(Error::invalid(format!("need at least 3 observations, got {}", counts.n())));
    }
    let emp = crate::pmf::empirical_pmf(counts)?;
    let problem = WeightedProblem::new(emp.origin(), emp.probs().to_vec(), counts.values())?;
    fit_weighted(&problem, opts)
}
