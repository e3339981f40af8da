//! Log-concave pmf inflated by a point mass:
//! `p(z) = pi 1{z = z0} + (1 - pi) q(z)` with `q` log-concave, fitted by EM.
//!
//! The component may itself put mass at `z0`. Each M-step is a weighted
//! log-concave fit, so the mixture mean equals the sample mean after every
//! iteration.

use serde::{Deserialize, Serialize};

use crate::accum;
use crate::error::{Error, Result};
use crate::pmf::{Counts, Pmf};
use crate::solver::{fit_weighted, FittedLogConcave, SolverOptions, WeightedProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureOptions {
    pub solver: SolverOptions,
    pub max_em: usize,
    /// Stop once the relative log-likelihood change falls below this.
    pub rel_tol: f64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self { solver: SolverOptions::default(), max_em: 500, rel_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub pi: f64,
    pub component: FittedLogConcave,
    pub z0: i64,
    pub loglik: f64,
    pub em_iterations: usize,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl MixtureFit {
    pub fn pmf(&self) -> Pmf {
        mixture_pmf(self)
    }

    pub fn prob(&self, z: i64) -> f64 {
        let spike = if z == self.z0 { self.pi } else { 0.0 };
        spike + (1.0 - self.pi) * self.component.prob(z)
    }

    pub fn component_mean(&self) -> f64 {
        self.component.to_pmf().mean()
    }

    pub fn mean(&self) -> f64 {
        self.pi * self.z0 as f64 + (1.0 - self.pi) * self.component_mean()
    }
}

/// `pi 1{z = z0} + (1 - pi) q(z)` on the smallest window holding both parts.
pub fn mix(pi: f64, q: &Pmf, z0: i64) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid(format!("mixing weight {pi} is not in [0, 1]")));
    }
    let lo = q.origin().min(z0);
    let hi = q.last().max(z0);
    let mut probs: Vec<f64> = q.on_window(lo, hi).into_iter().map(|p| (1.0 - pi) * p).collect();
    probs[(z0 - lo) as usize] += pi;
    Pmf::new(lo, probs)
}

pub fn mixture_pmf(fit: &MixtureFit) -> Pmf {
    mix(fit.pi, &fit.component.to_pmf(), fit.z0).expect("a fitted mixture is a valid pmf")
}

fn loglik(counts: &Counts, pi: f64, q: &FittedLogConcave, z0: i64) -> f64 {
    accum::sum(counts.iter().map(|(z, c)| {
        let spike = if z == z0 { pi } else { 0.0 };
        c as f64 * (spike + (1.0 - pi) * q.prob(z)).ln()
    }))
}

/// Weighted fit of the component with the count at `z0` reduced to `c0_kept`.
fn m_step(counts: &Counts, z0: i64, c0_kept: f64, opts: &SolverOptions) -> Result<FittedLogConcave> {
    let lo = counts.min().unwrap();
    let hi = counts.max().unwrap();
    let mut w: Vec<f64> = (lo..=hi).map(|z| if z == z0 { c0_kept } else { counts.get(z) as f64 }).collect();
    let first = w.iter().position(|v| *v > 0.0).unwrap();
    let last = w.iter().rposition(|v| *v > 0.0).unwrap();
    w.truncate(last + 1);
    w.drain(..first);
    let total = accum::sum(w.iter().copied());
    let w: Vec<f64> = w.into_iter().map(|v| v / total).collect();
    let origin = lo + first as i64;
    let candidates = w.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(i, _)| origin + i as i64).collect();
    fit_weighted(&WeightedProblem::new(origin, w, candidates)?, opts)
}

/// Spike excess over the average of the empirical pmf at the neighbours of
/// `z0` that lie in the data range.
fn initial_pi(counts: &Counts, z0: i64) -> f64 {
    let n = counts.n() as f64;
    let at = counts.get(z0) as f64 / n;
    let (lo, hi) = (counts.min().unwrap(), counts.max().unwrap());
    let neighbours: Vec<f64> =
        [z0 - 1, z0 + 1].into_iter().filter(|z| (lo..=hi).contains(z)).map(|z| counts.get(z) as f64 / n).collect();
    if neighbours.is_empty() {
        return at;
    }
    let avg = neighbours.iter().sum::<f64>() / neighbours.len() as f64;
    (at - avg).clamp(0.0, at)
}

/// EM fit of the inflated mixture. On hitting `max_em` the last iterate is
/// returned with `converged = false`.
pub fn fit_inflated(counts: &Counts, z0: i64, opts: &MixtureOptions) -> Result<MixtureFit> {
    if counts.n() < 3 {
        return Err(Error::invalid(format!("need at least 3 observations, got {}", counts.n())));
    }
    let (lo, hi) = (counts.min().unwrap(), counts.max().unwrap());
    if z0 < lo - 1 || z0 > hi + 1 {
        return Err(Error::invalid(format!("inflation point {z0} is not within or adjacent to [{lo}, {hi}]")));
    }
    let n = counts.n() as f64;
    let c0 = counts.get(z0) as f64;

    if lo == hi && lo == z0 {
        let component = m_step(counts, z0, c0, &opts.solver)?;
        return Ok(MixtureFit {
            pi: 0.0,
            component,
            z0,
            loglik: 0.0,
            em_iterations: 0,
            loglik_trace: vec![0.0],
            converged: true,
        });
    }

    let mut pi = initial_pi(counts, z0);
    let mut q = m_step(counts, z0, c0 - pi * n, &opts.solver)?;
    let mut ll = loglik(counts, pi, &q, z0);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_em {
        iterations += 1;
        let gamma = if pi > 0.0 { pi / (pi + (1.0 - pi) * q.prob(z0)) } else { 0.0 };
        let kept = c0 * (1.0 - gamma);
        pi = gamma * c0 / n;
        q = m_step(counts, z0, kept, &opts.solver)?;
        let next = loglik(counts, pi, &q, z0);
        trace.push(next);
        let change = (next - ll).abs() / ll.abs().max(1.0);
        ll = next;
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    Ok(MixtureFit { pi, component: q, z0, loglik: ll, em_iterations: iterations, loglik_trace: trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::fit_mle;
    use rand::{Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Poisson;

    fn spiked_sample(seed: u64, n: usize) -> Counts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pois = Poisson::new(3.0).unwrap();
        let mut c = Counts::new();
        for _ in 0..n {
            if rng.random::<f64>() < 0.1 {
                c.add(0, 1);
            } else {
                c.add(1 + rng.sample(pois) as i64, 1);
            }
        }
        c
    }

    #[test]
    fn mix_endpoints() {
        let q = Pmf::new(2, vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(mix(0.0, &q, 0).unwrap().probs(), q.probs());
        let full = mix(1.0, &q, 0).unwrap();
        assert_eq!(full.origin(), 0);
        assert_eq!(full.probs(), &[1.0]);
        let m = mix(0.031, &q, 3).unwrap();
        assert!((m.prob(3) - (0.031 + 0.969 * 0.5)).abs() < 1e-15);
        assert!(mix(1.5, &q, 0).is_err());
    }

    #[test]
    fn no_mass_at_inflation_point_gives_plain_mle() {
        let counts = Counts::from_pairs([(1, 3), (2, 7), (3, 9), (4, 5), (5, 2)]);
        let fit = fit_inflated(&counts, 0, &MixtureOptions::default()).unwrap();
        assert_eq!(fit.pi, 0.0);
        let plain = fit_mle(&counts, &SolverOptions::default()).unwrap();
        for (a, b) in fit.component.pmf.iter().zip(&plain.pmf) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn all_at_inflation_point() {
        let counts = Counts::from_pairs([(4, 10)]);
        let fit = fit_inflated(&counts, 4, &MixtureOptions::default()).unwrap();
        assert_eq!(fit.loglik, 0.0);
        assert!((fit.prob(4) - 1.0).abs() < 1e-15);
        assert_eq!(fit.component.pmf, vec![1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        let counts = Counts::from_pairs([(1, 3), (2, 7)]);
        assert!(fit_inflated(&counts, 9, &MixtureOptions::default()).is_err());
        assert!(fit_inflated(&Counts::from_pairs([(1, 2)]), 1, &MixtureOptions::default()).is_err());
    }

    #[test]
    fn recovers_spike_and_keeps_mean() {
        for seed in 0..3 {
            let counts = spiked_sample(seed, 2000);
            let fit = fit_inflated(&counts, 0, &MixtureOptions::default()).unwrap();
            assert!(fit.converged);
            assert!((fit.pi - 0.1).abs() < 0.05, "pi = {}", fit.pi);
            for w in fit.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-10 * w[0].abs().max(1.0));
            }
            assert!((fit.mean() - counts.mean()).abs() < 1e-6);
            assert!(fit.component_mean() > fit.mean());
            let total: f64 = fit.pmf().probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-10);
            assert!((fit.pmf().prob(0) - (fit.pi + (1.0 - fit.pi) * fit.component.prob(0))).abs() < 1e-10);
        }
    }
}
