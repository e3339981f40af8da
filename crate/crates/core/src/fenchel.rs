//! Executable optimality conditions.
//!
//! A concave log-pmf `psi` on `[z1, zm]` maximises the weighted criterion for
//! reference weights `w` iff its mass is one and the doubly-cumulative gap
//!
//! ```text
//! D(x) = sum_{z=z1}^{x-1} F_w(z) - sum_{z=z1}^{x-1} F_psi(z)
//! ```
//!
//! is nonnegative on the window and vanishes at every knot of `psi`. Here
//! `F_w` and `F_psi` are the cumulative sums of `w` and `exp(psi)`. The same
//! check serves the MLE (empirical weights) and the KL projection (the target
//! pmf as weights).
//!
//! All tolerances are absolute, on quantities bounded by the window width.

use serde::{Deserialize, Serialize};

use crate::accum;
use crate::error::{Error, Result};
use crate::hat::laplacian;
use crate::pmf::{moment, Counts, Pmf};
use crate::solver::{FittedLogConcave, KNOT_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointGap {
    pub x: i64,
    pub cumulative_gap: f64,
    pub is_knot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FenchelReport {
    /// `max(0, -min_x D(x))`.
    pub max_inequality_violation: f64,
    /// `max |D(x)|` over knots.
    pub max_knot_equality_gap: f64,
    /// `|sum exp(psi) - 1|`.
    pub mass_gap: f64,
    pub tol: f64,
    pub passed: bool,
    pub per_point: Vec<PointGap>,
}

impl FenchelReport {
    /// Largest of the three violations.
    pub fn gap(&self) -> f64 {
        self.max_inequality_violation.max(self.max_knot_equality_gap).max(self.mass_gap)
    }
}

/// Knot flags of a log-pmf on a window: endpoints plus interior points with
/// `[Delta psi](x) < -KNOT_TOL`.
pub(crate) fn knot_mask(psi: &[f64]) -> Vec<bool> {
    let mut mask = vec![false; psi.len()];
    for (i, c) in laplacian(psi).into_iter().enumerate() {
        mask[i + 1] = c < -KNOT_TOL;
    }
    mask[0] = true;
    if let Some(last) = mask.last_mut() {
        *last = true;
    }
    mask
}

/// `D(x)` for every `x` in the window.
pub(crate) fn cumulative_gaps(psi: &[f64], weights: &[f64]) -> Vec<f64> {
    let diff: Vec<f64> = weights.iter().zip(psi).map(|(w, s)| w - s.exp()).collect();
    let mut d = accum::double_cumsum(&diff);
    d.truncate(psi.len());
    d
}

/// Builds the report for a log-pmf `psi` on `origin..` against reference weights.
pub fn report(origin: i64, psi: &[f64], weights: &[f64], tol: f64) -> FenchelReport {
    debug_assert_eq!(psi.len(), weights.len());
    let gaps = cumulative_gaps(psi, weights);
    let knots = knot_mask(psi);
    let mut ineq: f64 = 0.0;
    let mut eq: f64 = 0.0;
    let per_point = gaps
        .iter()
        .zip(&knots)
        .enumerate()
        .map(|(i, (&d, &k))| {
            ineq = ineq.max(-d);
            if k {
                eq = eq.max(d.abs());
            }
            PointGap { x: origin + i as i64, cumulative_gap: d, is_knot: k }
        })
        .collect();
    let mass_gap = (accum::sum(psi.iter().map(|s| s.exp())) - 1.0).abs();
    let passed = ineq <= tol && eq <= tol && mass_gap <= tol;
    FenchelReport { max_inequality_violation: ineq, max_knot_equality_gap: eq, mass_gap, tol, passed, per_point }
}

fn empirical_on(fit: &FittedLogConcave, counts: &Counts) -> Result<Vec<f64>> {
    if counts.min() != Some(fit.origin) || counts.max() != Some(fit.last()) {
        return Err(Error::invalid(format!(
            "fit window [{}, {}] does not match data range [{:?}, {:?}]",
            fit.origin,
            fit.last(),
            counts.min(),
            counts.max()
        )));
    }
    let n = counts.n() as f64;
    Ok((fit.origin..=fit.last()).map(|z| counts.get(z) as f64 / n).collect())
}

/// Checks a fit against the optimality conditions for the MLE of `counts`.
pub fn verify_mle(fit: &FittedLogConcave, counts: &Counts, tol: f64) -> Result<FenchelReport> {
    let w = empirical_on(fit, counts)?;
    Ok(report(fit.origin, &fit.psi, &w, tol))
}

/// Checks a fit against the optimality conditions for the KL projection of `p0`.
pub fn verify_kl(fit: &FittedLogConcave, p0: &Pmf, tol: f64) -> Result<FenchelReport> {
    if p0.origin() != fit.origin || p0.last() != fit.last() {
        return Err(Error::invalid("fit window does not match the support of the target pmf"));
    }
    Ok(report(fit.origin, &fit.psi, p0.probs(), tol))
}

/// At a double knot `k` the fitted and empirical CDFs agree at `k`; at a
/// triple knot the fitted and empirical pmfs agree at `k`.
pub fn verify_double_triple(fit: &FittedLogConcave, counts: &Counts, tol: f64) -> Result<bool> {
    let w = empirical_on(fit, counts)?;
    let p: Vec<f64> = fit.psi.iter().map(|s| s.exp()).collect();
    let (fe, fh) = (accum::cumsum(&w), accum::cumsum(&p));
    let knots = fit.knot_set();
    for (i, &k) in knots.points.iter().enumerate() {
        let idx = (k - fit.origin) as usize;
        if knots.flags[i].double && (fh[idx] - fe[idx]).abs() > tol {
            return Ok(false);
        }
        if knots.flags[i].triple && (p[idx] - w[idx]).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Mean equality and moment domination, `m` in {1, 2, 3} about `0` and the
/// sample mean. Tolerances are relative to the size of the moment.
pub fn verify_moments(fit: &FittedLogConcave, counts: &Counts, tol: f64) -> Result<bool> {
    let emp = crate::pmf::empirical_pmf(counts)?;
    let fitted = fit.to_pmf();
    let mean = emp.mean();
    if (fitted.mean() - mean).abs() > tol * mean.abs().max(1.0) {
        return Ok(false);
    }
    for m in [1.0, 2.0, 3.0] {
        for a in [0.0, mean] {
            let (mf, me) = (moment(&fitted, m, a), moment(&emp, m, a));
            if mf > me + tol * me.max(1.0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
