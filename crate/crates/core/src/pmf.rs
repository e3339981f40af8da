//! Probability mass functions on the integers, their CDFs, and count data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::accum;
use crate::error::{Error, Result};

/// Tolerance on total mass for a valid [`Pmf`].
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance for log-concavity comparisons in the log domain.
pub const LOG_CONCAVE_TOL: f64 = 1e-12;

/// A finitely supported pmf stored on the contiguous window
/// `origin, origin + 1, ..., origin + probs.len() - 1`.
///
/// The first and last entries are strictly positive. Zeros strictly inside the
/// window are permitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    origin: i64,
    probs: Vec<f64>,
}

impl Pmf {
    /// Builds a pmf, trimming zero entries at either end.
    ///
    /// Fails on negative or non-finite entries, on an all-zero vector, and when
    /// the total mass differs from one by more than [`MASS_TOL`].
    pub fn new(origin: i64, probs: Vec<f64>) -> Result<Self> {
        let total = check_entries(&probs)?;
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("pmf mass is {total}, expected 1")));
        }
        Ok(Self::trimmed(origin, probs))
    }

    /// Builds a pmf from nonnegative weights, dividing by their sum.
    pub fn from_weights(origin: i64, weights: Vec<f64>) -> Result<Self> {
        let total = check_entries(&weights)?;
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::trimmed(origin, probs))
    }

    pub fn point_mass(at: i64) -> Self {
        Self { origin: at, probs: vec![1.0] }
    }

    fn trimmed(origin: i64, mut probs: Vec<f64>) -> Self {
        let first = probs.iter().position(|&p| p > 0.0).unwrap_or(0);
        let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        probs.truncate(last + 1);
        probs.drain(..first);
        Self { origin: origin + first as i64, probs }
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    /// Rightmost support point.
    pub fn last(&self) -> i64 {
        self.origin + self.probs.len() as i64 - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `p(z)`, zero outside the stored window.
    pub fn prob(&self, z: i64) -> f64 {
        if z < self.origin {
            return 0.0;
        }
        self.probs.get((z - self.origin) as usize).copied().unwrap_or(0.0)
    }

    /// `(z, p(z))` over the stored window.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probs.iter().enumerate().map(move |(i, &p)| (self.origin + i as i64, p))
    }

    /// Log-pmf over the window, with `-inf` for zero entries.
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect()
    }

    /// True when no entry strictly inside the window is zero.
    pub fn has_contiguous_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn cdf(&self) -> Cdf {
        let mut values = accum::cumsum(&self.probs);
        if let Some(last) = values.last_mut() {
            *last = 1.0;
        }
        for v in values.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Cdf { origin: self.origin, values }
    }

    pub fn mean(&self) -> f64 {
        accum::sum(self.iter().map(|(z, p)| z as f64 * p))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        moment(self, 2.0, m)
    }

    /// Probabilities on `[lo, hi]`, zero-padded.
    pub fn on_window(&self, lo: i64, hi: i64) -> Vec<f64> {
        (lo..=hi).map(|z| self.prob(z)).collect()
    }
}

fn check_entries(ws: &[f64]) -> Result<f64> {
    if ws.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if let Some(bad) = ws.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::invalid(format!("entry {bad} is not a nonnegative finite number")));
    }
    let total = accum::sum(ws.iter().copied());
    if total <= 0.0 {
        return Err(Error::invalid("all entries are zero"));
    }
    Ok(total)
}

/// A cumulative distribution function on `origin, origin + 1, ...`.
/// It equals zero left of `origin` and one right of the stored window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    origin: i64,
    values: Vec<f64>,
}

impl Cdf {
    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, z: i64) -> f64 {
        if z < self.origin {
            0.0
        } else {
            self.values.get((z - self.origin) as usize).copied().unwrap_or(1.0)
        }
    }
}

/// Observed counts per integer value.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    counts: BTreeMap<i64, u64>,
    n: u64,
}

impl Counts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I: IntoIterator<Item = (i64, u64)>>(pairs: I) -> Self {
        let mut c = Self::new();
        for (z, k) in pairs {
            c.add(z, k);
        }
        c
    }

    pub fn from_sample(xs: &[i64]) -> Self {
        Self::from_pairs(xs.iter().map(|&z| (z, 1)))
    }

    pub fn add(&mut self, z: i64, k: u64) {
        if k == 0 {
            return;
        }
        *self.counts.entry(z).or_insert(0) += k;
        self.n += k;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, z: i64) -> u64 {
        self.counts.get(&z).copied().unwrap_or(0)
    }

    /// Distinct observed values in increasing order.
    pub fn values(&self) -> Vec<i64> {
        self.counts.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.counts.iter().map(|(&z, &k)| (z, k))
    }

    pub fn min(&self) -> Option<i64> {
        self.counts.keys().next().copied()
    }

    pub fn max(&self) -> Option<i64> {
        self.counts.keys().next_back().copied()
    }

    pub fn mean(&self) -> f64 {
        accum::sum(self.iter().map(|(z, k)| z as f64 * k as f64)) / self.n as f64
    }
}

/// Empirical pmf `count(z) / n` on `[min value, max value]`.
pub fn empirical_pmf(counts: &Counts) -> Result<Pmf> {
    let (lo, hi) = match (counts.min(), counts.max()) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::invalid("empty counts")),
    };
    let n = counts.n() as f64;
    let probs = (lo..=hi).map(|z| counts.get(z) as f64 / n).collect();
    Pmf::from_weights(lo, probs)
}

/// Contiguous support and `p(z)^2 >= p(z-1) p(z+1)` at every interior point,
/// compared in the log domain.
pub fn is_log_concave(p: &Pmf) -> bool {
    if !p.has_contiguous_support() {
        return false;
    }
    let psi = p.log_probs();
    psi.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] <= LOG_CONCAVE_TOL)
}

/// Contiguous support and nonincreasing successive ratios `p(z) / p(z-1)`.
pub fn ratio_monotone(p: &Pmf) -> bool {
    if !p.has_contiguous_support() {
        return false;
    }
    let slack = LOG_CONCAVE_TOL.exp();
    let ratios: Vec<f64> = p.probs().windows(2).map(|w| w[1] / w[0]).collect();
    ratios.windows(2).all(|r| r[1] <= r[0] * slack)
}

/// `sum_z |z - a|^m p(z)`.
pub fn moment(p: &Pmf, m: f64, a: f64) -> f64 {
    accum::sum(p.iter().map(|(z, pz)| (z as f64 - a).abs().powf(m) * pz))
}

/// Distances between pmfs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// `(sum |p - q|^k)^(1/k)` for finite `k >= 1`.
    L(f64),
    /// `sup |p - q|`.
    LInf,
    /// `h` with `h^2 = 1/2 sum (sqrt p - sqrt q)^2`.
    Hellinger,
}

pub fn distance(p: &Pmf, q: &Pmf, metric: Metric) -> f64 {
    let lo = p.origin().min(q.origin());
    let hi = p.last().max(q.last());
    let pairs = (lo..=hi).map(|z| (p.prob(z), q.prob(z)));
    match metric {
        Metric::L(k) => {
            assert!(k >= 1.0, "ell_k requires k >= 1");
            accum::sum(pairs.map(|(a, b)| (a - b).abs().powf(k))).powf(1.0 / k)
        }
        Metric::LInf => pairs.map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        Metric::Hellinger => {
            let h2 = 0.5 * accum::sum(pairs.map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)));
            h2.max(0.0).sqrt()
        }
    }
}

/// Sup distance between two CDFs over the union of their windows.
pub fn cdf_sup_distance(p: &Pmf, q: &Pmf) -> f64 {
    let (fp, fq) = (p.cdf(), q.cdf());
    let lo = p.origin().min(q.origin());
    let hi = p.last().max(q.last());
    (lo..=hi).map(|z| (fp.at(z) - fq.at(z)).abs()).fold(0.0, f64::max)
}

/// Counts of `floor(x / delta)` per integer cell.
pub fn bin_real_sample(xs: &[f64], delta: f64) -> Result<Counts> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("bin width must be positive"));
    }
    if xs.is_empty() {
        return Err(Error::invalid("empty sample"));
    }
    let mut counts = Counts::new();
    for &x in xs {
        if !x.is_finite() {
            return Err(Error::invalid(format!("non-finite observation {x}")));
        }
        counts.add((x / delta).floor() as i64, 1);
    }
    Ok(counts)
}
