//! Monte Carlo studies: estimator comparison, CI lengths, knot recovery and
//! convergence rates. Replications run in parallel on their own RNG streams
//! and are merged in replication order, so results depend only on the seed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::dist::DistSpec;
use crate::experiments::parametric::{fit_parametric, ParametricFamily};
use crate::limit::{pointwise_ci_at, quantile_sorted, LimitDrawConfig};
use crate::parallel;
use crate::pmf::{self, empirical_pmf, Counts, Metric, Pmf};
use crate::projection::kl_project;
use crate::rng::{self, derive_seed};
use crate::solver::{fit_mle, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Empirical,
    LogConcave,
    Parametric(ParametricFamily),
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Empirical,
        Estimator::LogConcave,
        Estimator::Parametric(ParametricFamily::Poisson),
        Estimator::Parametric(ParametricFamily::Geometric),
        Estimator::Parametric(ParametricFamily::NegBinomial),
    ];

    pub fn fit(&self, counts: &Counts, opts: &SolverOptions) -> Result<Pmf> {
        match self {
            Estimator::Empirical => empirical_pmf(counts),
            Estimator::LogConcave => Ok(fit_mle(counts, opts)?.to_pmf()),
            Estimator::Parametric(f) => Ok(fit_parametric(counts, *f)?.pmf().clone()),
        }
    }

    /// Parses a comma-separated list such as `emp,lc,pois,geom,nbin`.
    pub fn parse_list(s: &str) -> Result<Vec<Estimator>> {
        s.split(',').map(|t| t.trim().parse()).collect()
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Empirical => f.write_str("emp"),
            Estimator::LogConcave => f.write_str("lc"),
            Estimator::Parametric(ParametricFamily::Poisson) => f.write_str("pois"),
            Estimator::Parametric(ParametricFamily::Geometric) => f.write_str("geom"),
            Estimator::Parametric(ParametricFamily::NegBinomial) => f.write_str("nbin"),
        }
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emp" | "empirical" => Ok(Estimator::Empirical),
            "lc" | "logconcave" | "log-concave" => Ok(Estimator::LogConcave),
            other => other
                .parse::<ParametricFamily>()
                .map(Estimator::Parametric)
                .map_err(|_| Error::invalid(format!("unknown estimator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub rep: usize,
    pub estimator: Estimator,
    pub l2: f64,
    pub hellinger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    pub successes: usize,
    pub failures: usize,
    pub mean_l2: f64,
    pub q1_l2: f64,
    pub median_l2: f64,
    pub q3_l2: f64,
    pub median_hellinger: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub dist: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<ReplicationRow>,
    pub summary: Vec<EstimatorSummary>,
}

impl SimReport {
    pub fn summary_for(&self, e: Estimator) -> Option<&EstimatorSummary> {
        self.summary.iter().find(|s| s.estimator == e)
    }
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

/// Median of the values, `NaN` when there are none.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    quantile_sorted(&sorted(xs.to_vec()), 0.5)
}

/// Samples `n` points `reps` times and records the l2 and Hellinger
/// distances of each estimator to the truth. Failed fits are counted.
pub fn run_comparison(
    dist: &DistSpec,
    n: usize,
    reps: usize,
    estimators: &[Estimator],
    seed: u64,
    opts: &SolverOptions,
) -> Result<SimReport> {
    if reps == 0 || n == 0 {
        return Err(Error::invalid("need at least one replication and one observation"));
    }
    let per_rep = parallel::map_indexed(reps, |rep| {
        let mut rng = rng::stream(seed, rep as u64);
        let counts = dist.sample(n, &mut rng);
        estimators
            .iter()
            .map(|e| {
                e.fit(&counts, opts).ok().map(|p| {
                    (pmf::distance(&p, dist.pmf(), Metric::L(2.0)), pmf::distance(&p, dist.pmf(), Metric::Hellinger))
                })
            })
            .collect::<Vec<_>>()
    });
    let mut rows = Vec::new();
    for (rep, results) in per_rep.iter().enumerate() {
        for (e, r) in estimators.iter().zip(results) {
            if let Some((l2, hellinger)) = r {
                rows.push(ReplicationRow { rep, estimator: *e, l2: *l2, hellinger: *hellinger });
            }
        }
    }
    let summary = estimators
        .iter()
        .map(|&e| {
            let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| r.estimator == e).collect();
            let l2 = sorted(mine.iter().map(|r| r.l2).collect());
            let h: Vec<f64> = mine.iter().map(|r| r.hellinger).collect();
            let q = |p| if l2.is_empty() { f64::NAN } else { quantile_sorted(&l2, p) };
            EstimatorSummary {
                estimator: e,
                successes: l2.len(),
                failures: reps - l2.len(),
                mean_l2: l2.iter().sum::<f64>() / l2.len() as f64,
                q1_l2: q(0.25),
                median_l2: q(0.5),
                q3_l2: q(0.75),
                median_hellinger: median(&h),
            }
        })
        .collect();
    Ok(SimReport { dist: dist.to_string(), n, reps, seed, rows, summary })
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. `None` for fewer
/// than two points or a constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let m = (x.len() + 1) as f64 / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - m) * (b - m);
        sxx += (a - m) * (a - m);
        syy += (b - m) * (b - m);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiLengthRow {
    pub a: i64,
    pub log_concave: bool,
    pub intervals: usize,
    /// Replications where `x` fell outside the fitted support.
    pub skipped: usize,
    pub mean_length: f64,
    pub sd_length: f64,
    pub mean_endpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiReplication {
    pub a: i64,
    pub rep: usize,
    pub endpoint: i64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiLengthTable {
    pub x: i64,
    pub n: usize,
    pub reps: usize,
    pub draws: usize,
    pub level: f64,
    pub seed: u64,
    pub rows: Vec<CiLengthRow>,
    pub replications: Vec<CiReplication>,
    /// Spearman correlation of interval length against the largest
    /// observation, over all replications.
    pub trend_vs_endpoint: Option<f64>,
    /// Spearman correlation of mean length against `a`.
    pub trend_vs_a: Option<f64>,
}

/// Plug-in confidence intervals at `x` for samples of size `n` from the
/// triangular pmf with each endpoint in `a_values`, `reps` samples per
/// endpoint and `draws` limit draws per interval.
#[allow(clippy::too_many_arguments)]
pub fn ci_length_experiment(
    a_values: &[i64],
    n: usize,
    reps: usize,
    draws: usize,
    x: i64,
    level: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<CiLengthTable> {
    let dists = a_values.iter().map(|&a| Ok((a, DistSpec::triangular(a)?))).collect::<Result<Vec<_>>>()?;
    ci_length_for(&dists, n, reps, draws, x, level, seed, opts)
}

/// [`ci_length_experiment`] over arbitrary distributions, each labelled by
/// an integer used as the trend covariate.
#[allow(clippy::too_many_arguments)]
pub fn ci_length_for(
    dists: &[(i64, DistSpec)],
    n: usize,
    reps: usize,
    draws: usize,
    x: i64,
    level: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<CiLengthTable> {
    if reps == 0 || n < 3 {
        return Err(Error::invalid("need at least one replication of size at least 3"));
    }
    let mut rows = Vec::new();
    let mut replications = Vec::new();
    for (a, dist) in dists {
        let a = *a;
        if x < dist.pmf().origin() || x > dist.pmf().last() {
            return Err(Error::invalid(format!("x = {x} is outside the support of {dist}")));
        }
        let a_seed = derive_seed(seed, a as u64);
        let results = parallel::map_indexed(reps, |rep| -> Result<(i64, Option<f64>)> {
            let mut rng = rng::stream(a_seed, rep as u64);
            let counts = dist.sample(n, &mut rng);
            let fit = fit_mle(&counts, opts)?;
            let config = LimitDrawConfig::plug_in(&fit, draws, derive_seed(a_seed, rep as u64), level);
            let point = pointwise_ci_at(&fit, n as u64, x, &config)?;
            Ok((counts.max().unwrap(), point.map(|p| p.length())))
        });
        let results: Vec<(i64, Option<f64>)> = results.into_iter().collect::<Result<_>>()?;
        let mut lengths = Vec::new();
        let mut endpoints = Vec::new();
        for (rep, (endpoint, len)) in results.iter().enumerate() {
            endpoints.push(*endpoint as f64);
            if let Some(l) = len {
                lengths.push(*l);
                replications.push(CiReplication { a, rep, endpoint: *endpoint, length: *l });
            }
        }
        let k = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / k;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        rows.push(CiLengthRow {
            a,
            log_concave: dist.is_log_concave(),
            intervals: lengths.len(),
            skipped: reps - lengths.len(),
            mean_length: mean,
            sd_length: var.sqrt(),
            mean_endpoint: endpoints.iter().sum::<f64>() / endpoints.len() as f64,
        });
    }
    let (trend_vs_endpoint, trend_vs_a) = if reps > 1 {
        let ends: Vec<f64> = replications.iter().map(|r| r.endpoint as f64).collect();
        let lens: Vec<f64> = replications.iter().map(|r| r.length).collect();
        let avs: Vec<f64> = rows.iter().map(|r| r.a as f64).collect();
        let means: Vec<f64> = rows.iter().map(|r| r.mean_length).collect();
        (spearman(&ends, &lens), spearman(&avs, &means))
    } else {
        (None, None)
    };
    Ok(CiLengthTable { x, n, reps, draws, level, seed, rows, replications, trend_vs_endpoint, trend_vs_a })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub n: usize,
    /// Fraction of replications containing each target knot.
    pub rates: Vec<f64>,
    /// Fraction of replications whose fitted window ends are both knots.
    pub endpoint_rate: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotRecovery {
    pub dist: String,
    pub knots: Vec<i64>,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<RecoveryRow>,
}

/// How often each point of `knots` is a knot of the fitted log-pmf.
pub fn knot_recovery(
    dist: &DistSpec,
    knots: &[i64],
    n_grid: &[usize],
    reps: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<KnotRecovery> {
    if reps == 0 {
        return Err(Error::invalid("need at least one replication"));
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        let n_seed = derive_seed(seed, n as u64);
        let found = parallel::map_indexed(reps, |rep| {
            let mut rng = rng::stream(n_seed, rep as u64);
            let counts = dist.sample(n, &mut rng);
            fit_mle(&counts, opts).ok().map(|fit| {
                let set = fit.knot_set();
                let ends = set.contains(fit.origin) && set.contains(fit.last());
                (knots.iter().map(|k| set.contains(*k)).collect::<Vec<_>>(), ends)
            })
        });
        let ok: Vec<_> = found.into_iter().flatten().collect();
        let m = ok.len().max(1) as f64;
        rows.push(RecoveryRow {
            n,
            rates: (0..knots.len()).map(|i| ok.iter().filter(|(h, _)| h[i]).count() as f64 / m).collect(),
            endpoint_rate: ok.iter().filter(|(_, e)| *e).count() as f64 / m,
            failures: reps - ok.len(),
        });
    }
    Ok(KnotRecovery { dist: dist.to_string(), knots: knots.to_vec(), reps, seed, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub median_hellinger: f64,
    pub median_cdf_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub reps: usize,
    pub seed: u64,
    pub truth_log_concave: bool,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of log median Hellinger distance against log n.
    pub slope: f64,
    pub high_variance: bool,
}

/// Hellinger distance of the MLE to the log-concave projection of `p0`
/// (which is `p0` itself when it is log-concave) across sample sizes.
pub fn rate_check(p0: &Pmf, n_grid: &[usize], reps: usize, seed: u64, opts: &SolverOptions) -> Result<RateReport> {
    if reps == 0 || n_grid.len() < 2 {
        return Err(Error::invalid("need at least one replication and two sample sizes"));
    }
    let target = kl_project(p0, opts)?.to_pmf();
    let dist = DistSpec::custom(p0.clone());
    let mut rows = Vec::new();
    for &n in n_grid {
        let n_seed = derive_seed(seed, n as u64);
        let d = parallel::map_indexed(reps, |rep| {
            let mut rng = rng::stream(n_seed, rep as u64);
            let counts = dist.sample(n, &mut rng);
            fit_mle(&counts, opts).ok().map(|fit| {
                let p = fit.to_pmf();
                (pmf::distance(&p, &target, Metric::Hellinger), pmf::cdf_sup_distance(&p, &target))
            })
        });
        let d: Vec<(f64, f64)> = d.into_iter().flatten().collect();
        rows.push(RateRow {
            n,
            median_hellinger: median(&d.iter().map(|t| t.0).collect::<Vec<_>>()),
            median_cdf_sup: median(&d.iter().map(|t| t.1).collect::<Vec<_>>()),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_hellinger.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(RateReport {
        reps,
        seed,
        truth_log_concave: pmf::is_log_concave(p0),
        rows,
        slope: sxy / sxx,
        high_variance: reps < 10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        // Pearson on the ranks (1,2,3,4) and (1,3,2,4).
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.8).abs() < 1e-15);
    }

    #[test]
    fn estimator_names() {
        let all = Estimator::parse_list("emp,lc,pois,geom,nbin").unwrap();
        assert_eq!(all, Estimator::ALL.to_vec());
        assert_eq!(all.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","), "emp,lc,pois,geom,nbin");
        assert!(Estimator::parse_list("emp,beta").is_err());
    }

    #[test]
    fn comparison_is_seed_deterministic() {
        let d = DistSpec::poisson(2.0).unwrap();
        let opts = SolverOptions::default();
        let a = run_comparison(&d, 25, 20, &Estimator::ALL, 7, &opts).unwrap();
        let b = run_comparison(&d, 25, 20, &Estimator::ALL, 7, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len() + a.summary.iter().map(|s| s.failures).sum::<usize>(), 100);
        assert!(run_comparison(&d, 25, 0, &Estimator::ALL, 7, &opts).is_err());
    }

    #[test]
    fn single_replication_table_has_no_trend() {
        let t = ci_length_experiment(&[11, 12], 50, 1, 50, 9, 0.95, 3, &SolverOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.trend_vs_endpoint.is_none() && t.trend_vs_a.is_none());
    }
}
