//! Sampling the pointwise limit distribution of the log-concave MLE and the
//! resulting confidence intervals.
//!
//! Between successive knots `r < s` the limit of `sqrt(n) (p_hat(x) - p(x))`
//! is `[Delta H](x) = g*(x) p(x)`, where `g*` is the weighted concave LS fit
//! to `W / p` on `r..s` and `W` is the Gaussian increment vector with
//! covariance `diag(p) - p p^T`.
//!
//! `W` is built over the whole support from independent normals,
//! `W_z = sqrt(p_z) G_z - p_z sum_k sqrt(p_k) G_k`, which has exactly that
//! covariance and whose partial sums are the Brownian bridge evaluated at the
//! CDF. The CDF limit reuses those partial sums, so both limits come from one
//! Gaussian draw.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::accum;
use crate::concave_ls::{fit_concave_ls, ConcaveLsFit, LsProblem, LS_TOL};
use crate::error::{Error, Result};
use crate::parallel;
use crate::pmf::Pmf;
use crate::rng::{self, Rng};
use crate::solver::{FittedLogConcave, KnotSet};

/// Inclusive interval `start..=end` of integers.
pub type Interval = (i64, i64);

/// Tiling of a support window into inter-knot intervals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalPartition {
    intervals: Vec<Interval>,
}

impl IntervalPartition {
    /// Intervals `{k_j, ..., k_{j+1} - 1}` between successive knots. The right
    /// window end is never an internal knot, so the last interval runs through it.
    pub fn from_knots(knots: &[i64]) -> Result<Self> {
        if knots.is_empty() || knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("knots must be nonempty and strictly increasing"));
        }
        let n = knots.len();
        if n == 1 {
            return Ok(Self { intervals: vec![(knots[0], knots[0])] });
        }
        let mut intervals: Vec<Interval> = knots.windows(2).map(|w| (w[0], w[1] - 1)).collect();
        intervals.last_mut().unwrap().1 = knots[n - 1];
        Ok(Self { intervals })
    }

    pub fn from_knot_set(knots: &KnotSet) -> Self {
        Self::from_knots(&knots.points).expect("knot sets are strictly increasing")
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn containing(&self, x: i64) -> Option<Interval> {
        self.intervals.iter().copied().find(|&(a, b)| a <= x && x <= b)
    }
}

/// One Gaussian world: `W` on the pmf window and its partial sums.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraw {
    pub origin: i64,
    /// `W(z)` for every point of the pmf window.
    pub w: Vec<f64>,
    /// `U(F(z)) = sum_{y <= z} W(y)`.
    pub bridge: Vec<f64>,
}

impl GaussianDraw {
    pub fn from_increments(origin: i64, w: Vec<f64>) -> Self {
        let bridge = accum::cumsum(&w);
        Self { origin, w, bridge }
    }

    fn slice(&self, (a, b): Interval) -> &[f64] {
        &self.w[(a - self.origin) as usize..=(b - self.origin) as usize]
    }

    /// `U(F(z))`, zero left of the window.
    pub fn bridge_at(&self, z: i64) -> f64 {
        if z < self.origin {
            0.0
        } else {
            self.bridge.get((z - self.origin) as usize).copied().unwrap_or(0.0)
        }
    }
}

/// Draws `W` on the whole window of `pmf`.
pub fn sample_gaussian(pmf: &Pmf, rng: &mut Rng) -> GaussianDraw {
    let roots: Vec<f64> = pmf.probs().iter().map(|p| p.sqrt()).collect();
    let g: Vec<f64> = roots.iter().map(|_| rng.sample(StandardNormal)).collect();
    let common = accum::sum(roots.iter().zip(&g).map(|(r, gi)| r * gi));
    let w = roots.iter().zip(pmf.probs()).zip(&g).map(|((r, p), gi)| r * gi - p * common).collect();
    GaussianDraw::from_increments(pmf.origin(), w)
}

/// `(W(r), ..., W(s-1))` for the interval, from one draw over the whole support.
pub fn sample_w(pmf: &Pmf, interval: Interval, rng: &mut Rng) -> Result<Vec<f64>> {
    check_interval(pmf, interval)?;
    Ok(sample_gaussian(pmf, rng).slice(interval).to_vec())
}

fn check_interval(pmf: &Pmf, (a, b): Interval) -> Result<()> {
    if a > b || a < pmf.origin() || b > pmf.last() {
        return Err(Error::invalid(format!("interval [{a}, {b}] is not inside the support")));
    }
    if (a..=b).any(|z| pmf.prob(z) <= 0.0) {
        return Err(Error::invalid(format!("interval [{a}, {b}] contains zero-probability points")));
    }
    Ok(())
}

/// A limit draw with the regression that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDraw {
    pub interval: Interval,
    /// `[Delta H](x) = g*(x) p(x)` on the interval.
    pub delta_h: Vec<f64>,
    /// `[nabla H](x) = sum_{z=r}^{x} g*(z) p(z)` on the interval.
    pub nabla_h: Vec<f64>,
    pub problem: LsProblem,
    pub fit: ConcaveLsFit,
}

/// Solves the limit regression on `interval` for a given Gaussian world.
/// `allowed` lists the points where `g*` may bend (the whole interval in the
/// well-specified case).
pub fn limit_from_draw(pmf: &Pmf, interval: Interval, allowed: &[i64], draw: &GaussianDraw) -> Result<LimitDraw> {
    check_interval(pmf, interval)?;
    let weights: Vec<f64> = (interval.0..=interval.1).map(|z| pmf.prob(z)).collect();
    let targets = draw.slice(interval).iter().zip(&weights).map(|(w, p)| w / p).collect();
    let problem = LsProblem { start: interval.0, weights, targets, allowed_knots: allowed.to_vec() };
    let fit = fit_concave_ls(&problem, LS_TOL)?;
    let delta_h: Vec<f64> = fit.g_star.iter().zip(&problem.weights).map(|(g, p)| g * p).collect();
    let nabla_h = accum::cumsum(&delta_h);
    Ok(LimitDraw { interval, delta_h, nabla_h, problem, fit })
}

fn full_interval(interval: Interval) -> Vec<i64> {
    (interval.0..=interval.1).collect()
}

/// One draw of `[Delta H](x)` for `x` in the interval.
pub fn limit_draw(pmf: &Pmf, interval: Interval, allowed: &[i64], rng: &mut Rng) -> Result<Vec<f64>> {
    let draw = sample_gaussian(pmf, rng);
    Ok(limit_from_draw(pmf, interval, allowed, &draw)?.delta_h)
}

/// One draw of the CDF limit `[nabla H](x) + U(F(r - 1))` on the interval
/// (well-specified case).
pub fn cdf_limit_draw(pmf: &Pmf, interval: Interval, rng: &mut Rng) -> Result<Vec<f64>> {
    let draw = sample_gaussian(pmf, rng);
    cdf_limit_from_draw(pmf, interval, &draw)
}

pub fn cdf_limit_from_draw(pmf: &Pmf, interval: Interval, draw: &GaussianDraw) -> Result<Vec<f64>> {
    let limit = limit_from_draw(pmf, interval, &full_interval(interval), draw)?;
    let offset = draw.bridge_at(interval.0 - 1);
    Ok(limit.nabla_h.iter().map(|v| v + offset).collect())
}

/// Settings for the plug-in confidence band.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitDrawConfig {
    /// pmf used in the limit (the fitted pmf for plug-in intervals).
    pub pmf: Pmf,
    pub partition: IntervalPartition,
    pub draws: usize,
    pub seed: u64,
    pub level: f64,
}

impl LimitDrawConfig {
    /// Plug-in configuration: the fitted pmf and the knots of the fit.
    pub fn plug_in(fit: &FittedLogConcave, draws: usize, seed: u64, level: f64) -> Self {
        Self { pmf: fit.to_pmf(), partition: IntervalPartition::from_knot_set(&fit.knot_set()), draws, seed, level }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub x: i64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Lower and upper quantiles of the limit at `x`.
    pub q1: f64,
    pub q2: f64,
}

impl BandPoint {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceBand {
    pub points: Vec<BandPoint>,
    pub level: f64,
    pub draws: usize,
    pub seed: u64,
    pub sample_size: u64,
    pub quantile_method: String,
    pub warnings: Vec<String>,
}

/// Type-7 sample quantile (linear interpolation between order statistics) of
/// sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided standard normal quantile for the given level.
pub fn normal_critical(level: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

/// Quantiles `(q1, q2)` of `[Delta H](x)` for every `x` in the intervals
/// selected by `keep`.
fn limit_quantiles(config: &LimitDrawConfig, keep: impl Fn(Interval) -> bool) -> Result<Vec<(i64, f64, f64)>> {
    let z = normal_critical(config.level);
    let (pa, pb) = ((1.0 - config.level) / 2.0, (1.0 + config.level) / 2.0);
    let mut out = Vec::new();
    let mut simulated = Vec::new();
    for &iv in config.partition.intervals() {
        if !keep(iv) {
            continue;
        }
        check_interval(&config.pmf, iv)?;
        if iv.0 == iv.1 {
            let p = config.pmf.prob(iv.0);
            let sd = (p * (1.0 - p)).sqrt();
            out.push((iv.0, -z * sd, z * sd));
        } else {
            simulated.push(iv);
        }
    }
    if !simulated.is_empty() {
        let per_draw: Vec<Result<Vec<Vec<f64>>>> = parallel::map_indexed(config.draws, |b| {
            let mut rng = rng::stream(config.seed, b as u64);
            let draw = sample_gaussian(&config.pmf, &mut rng);
            simulated
                .iter()
                .map(|&iv| limit_from_draw(&config.pmf, iv, &full_interval(iv), &draw).map(|d| d.delta_h))
                .collect()
        });
        let per_draw: Vec<Vec<Vec<f64>>> = per_draw.into_iter().collect::<Result<_>>()?;
        for (j, &(a, b)) in simulated.iter().enumerate() {
            for (i, x) in (a..=b).enumerate() {
                let mut vals: Vec<f64> = per_draw.iter().map(|d| d[j][i]).collect();
                vals.sort_by(f64::total_cmp);
                out.push((x, quantile_sorted(&vals, pa), quantile_sorted(&vals, pb)));
            }
        }
    }
    out.sort_by_key(|t| t.0);
    Ok(out)
}

fn validate(config: &LimitDrawConfig, n: u64) -> Result<Vec<String>> {
    if !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::invalid(format!("level {} is not in (0, 1)", config.level)));
    }
    if config.draws == 0 {
        return Err(Error::invalid("need at least one draw"));
    }
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let mut warnings = Vec::new();
    if config.draws < 100 {
        warnings.push(format!("only {} draws; quantile estimates are unreliable", config.draws));
    }
    Ok(warnings)
}

fn band_point(fit: &FittedLogConcave, n: u64, (x, q1, q2): (i64, f64, f64)) -> BandPoint {
    let est = fit.prob(x);
    let root_n = (n as f64).sqrt();
    BandPoint {
        x,
        estimate: est,
        lower: (est - q2 / root_n).clamp(0.0, 1.0),
        upper: (est - q1 / root_n).clamp(0.0, 1.0),
        q1,
        q2,
    }
}

/// Pointwise intervals `p_hat(x) - q2/sqrt(n), p_hat(x) - q1/sqrt(n)` over the
/// fitted support, clamped to `[0, 1]`. Singleton intervals use the normal
/// quantiles in closed form; longer ones use `config.draws` limit draws.
pub fn pointwise_ci(fit: &FittedLogConcave, n: u64, config: &LimitDrawConfig) -> Result<ConfidenceBand> {
    let warnings = validate(config, n)?;
    let quantiles = limit_quantiles(config, |_| true)?;
    Ok(ConfidenceBand {
        points: quantiles.into_iter().map(|q| band_point(fit, n, q)).collect(),
        level: config.level,
        draws: config.draws,
        seed: config.seed,
        sample_size: n,
        quantile_method: "type-7 linear interpolation".into(),
        warnings,
    })
}

/// The interval at a single point; only the partition interval holding `x`
/// is simulated. `None` when `x` lies outside the partition.
pub fn pointwise_ci_at(fit: &FittedLogConcave, n: u64, x: i64, config: &LimitDrawConfig) -> Result<Option<BandPoint>> {
    validate(config, n)?;
    let Some(iv) = config.partition.containing(x) else {
        return Ok(None);
    };
    let quantiles = limit_quantiles(config, |other| other == iv)?;
    Ok(quantiles.into_iter().find(|q| q.0 == x).map(|q| band_point(fit, n, q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concave_ls::verify_ls;

    #[test]
    fn partition_rules() {
        let p = IntervalPartition::from_knots(&[0, 3, 4, 9]).unwrap();
        assert_eq!(p.intervals(), &[(0, 2), (3, 3), (4, 9)]);
        assert_eq!(IntervalPartition::from_knots(&[5]).unwrap().intervals(), &[(5, 5)]);
        assert_eq!(IntervalPartition::from_knots(&[0, 1]).unwrap().intervals(), &[(0, 1)]);
        assert!(IntervalPartition::from_knots(&[2, 2]).is_err());
        assert_eq!(p.containing(5), Some((4, 9)));
        assert_eq!(p.containing(10), None);
    }

    #[test]
    fn increments_sum_to_zero() {
        let pmf = Pmf::new(0, vec![0.1, 0.2, 0.4, 0.3]).unwrap();
        let mut rng = rng::stream(3, 0);
        for _ in 0..100 {
            let d = sample_gaussian(&pmf, &mut rng);
            assert!(d.w.iter().sum::<f64>().abs() < 1e-12);
            assert!(d.bridge.last().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn zero_world_gives_zero_limit() {
        let pmf = Pmf::new(0, vec![0.1, 0.2, 0.4, 0.3]).unwrap();
        let zero = GaussianDraw::from_increments(0, vec![0.0; 4]);
        let d = limit_from_draw(&pmf, (0, 3), &[0, 1, 2, 3], &zero).unwrap();
        assert!(d.delta_h.iter().all(|v| *v == 0.0));
        assert_eq!(cdf_limit_from_draw(&pmf, (1, 3), &zero).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn singleton_interval_is_the_increment() {
        let pmf = Pmf::new(0, vec![0.1, 0.2, 0.4, 0.3]).unwrap();
        let mut rng = rng::stream(9, 0);
        let draw = sample_gaussian(&pmf, &mut rng);
        let d = limit_from_draw(&pmf, (2, 2), &[2], &draw).unwrap();
        assert!((d.delta_h[0] - draw.w[2]).abs() < 1e-15);
        let c = cdf_limit_from_draw(&pmf, (2, 2), &draw).unwrap();
        assert!((c[0] - draw.bridge[2]).abs() < 1e-14);
    }

    #[test]
    fn limit_regressions_verify() {
        let pmf = Pmf::from_weights(0, vec![1.0, 3.0, 6.0, 8.0, 7.0, 4.0, 2.0, 1.0]).unwrap();
        let mut rng = rng::stream(11, 0);
        for _ in 0..200 {
            let draw = sample_gaussian(&pmf, &mut rng);
            let d = limit_from_draw(&pmf, (1, 6), &full_interval((1, 6)), &draw).unwrap();
            assert!(verify_ls(&d.fit, &d.problem, 1e-9));
        }
    }

    #[test]
    fn type7_quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert!((quantile_sorted(&xs, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(quantile_sorted(&[7.0], 0.3), 7.0);
    }
}
