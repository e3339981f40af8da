//! Kullback-Leibler projection of a bounded-support pmf onto the log-concave class.
//!
//! Minimising `KL(p || p0) = sum p0 log(p0 / p)` over log-concave `p` is the
//! same as maximising `sum p0 log p`, i.e. the weighted criterion with `p0` as
//! weights. Candidate knots are all support points of `p0`.

use crate::accum;
use crate::error::Result;
use crate::fenchel::{self, FenchelReport};
use crate::pmf::Pmf;
use crate::solver::{fit_weighted, FittedLogConcave, SolverOptions, WeightedProblem};

/// `sum_z p0(z) log(p0(z) / p(z))`, with `0 log 0 = 0`; infinite when `p0`
/// puts mass where `p` does not.
pub fn kl_divergence(p: &Pmf, p0: &Pmf) -> f64 {
    let mut acc = accum::Neumaier::new();
    for (z, q) in p0.iter() {
        if q == 0.0 {
            continue;
        }
        let pz = p.prob(z);
        if pz == 0.0 {
            return f64::INFINITY;
        }
        acc.add(q * (q / pz).ln());
    }
    acc.value()
}

/// Log-concave pmf closest to `p0` in KL divergence.
///
/// `p0` is a [`Pmf`] and therefore already has bounded support; unbounded
/// targets must be truncated by the caller.
pub fn kl_project(p0: &Pmf, opts: &SolverOptions) -> Result<FittedLogConcave> {
    fit_weighted(&WeightedProblem::from_pmf(p0), opts)
}

/// Optimality conditions of a projection: the doubly-cumulative check with
/// the CDF of `p0` in place of the empirical CDF.
pub fn verify_kl(fit: &FittedLogConcave, p0: &Pmf, tol: f64) -> Result<FenchelReport> {
    fenchel::verify_kl(fit, p0, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn divergence_examples() {
        let p0 = Pmf::new(0, vec![0.5, 0.5]).unwrap();
        assert_eq!(kl_divergence(&p0, &p0), 0.0);
        let p = Pmf::new(0, vec![0.25, 0.75]).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(kl_divergence(&p, &p0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.1438, epsilon = 1e-4);
        let narrow = Pmf::point_mass(0);
        assert_eq!(kl_divergence(&narrow, &p0), f64::INFINITY);
    }

    #[test]
    fn log_concave_target_is_fixed() {
        let mut w = vec![(-2.0f64).exp()];
        for z in 1..=12 {
            let prev = *w.last().unwrap();
            w.push(prev * 2.0 / z as f64);
        }
        let p0 = Pmf::from_weights(0, w).unwrap();
        let fit = kl_project(&p0, &SolverOptions::default()).unwrap();
        for (a, b) in fit.pmf.iter().zip(p0.probs()) {
            assert!((a - b).abs() < 1e-8);
        }
        let report = verify_kl(&fit, &p0, 1e-8).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn gap_target_projects_to_uniform() {
        let p0 = Pmf::new(0, vec![0.5, 0.0, 0.5]).unwrap();
        let fit = kl_project(&p0, &SolverOptions::default()).unwrap();
        for p in &fit.pmf {
            assert!((p - 1.0 / 3.0).abs() < 1e-10);
        }
        assert!(verify_kl(&fit, &p0, 1e-8).unwrap().passed);
    }

    #[test]
    fn wrong_candidate_fails_verification() {
        let mut w = vec![(-2.0f64).exp()];
        for z in 1..=8 {
            let prev = *w.last().unwrap();
            w.push(prev * 2.0 / z as f64);
        }
        let p0 = Pmf::from_weights(0, w).unwrap();
        let mut fit = kl_project(&p0, &SolverOptions::default()).unwrap();
        let u = -(9.0f64).ln();
        fit.psi = vec![u; 9];
        fit.knots = vec![0, 8];
        assert!(!verify_kl(&fit, &p0, 1e-8).unwrap().passed);
    }
}
