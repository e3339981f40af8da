//! Parametric maximum likelihood baselines on `{0, 1, ...}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::dist::DistSpec;
use crate::pmf::{Counts, Pmf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParametricFamily {
    Poisson,
    Geometric,
    NegBinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricFit {
    pub family: ParametricFamily,
    /// `[lambda]`, `[p]` or `[r, p]`.
    pub params: Vec<f64>,
    #[serde(skip)]
    pub pmf: Option<Pmf>,
    /// The likelihood has no interior maximiser; `diagnostic` says which
    /// boundary was used.
    pub boundary: bool,
    pub diagnostic: Option<String>,
}

impl ParametricFit {
    pub fn pmf(&self) -> &Pmf {
        self.pmf.as_ref().expect("fits carry their pmf")
    }
}

impl fmt::Display for ParametricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Poisson => "poisson",
            Self::Geometric => "geometric",
            Self::NegBinomial => "negbin",
        })
    }
}

impl FromStr for ParametricFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" | "pois" => Ok(Self::Poisson),
            "geometric" | "geom" => Ok(Self::Geometric),
            "negbin" | "nbin" | "negbinomial" => Ok(Self::NegBinomial),
            _ => Err(Error::invalid(format!("unknown parametric family {s:?}"))),
        }
    }
}

fn fit(family: ParametricFamily, params: Vec<f64>, dist: DistSpec) -> ParametricFit {
    ParametricFit { family, params, pmf: Some(dist.pmf().clone()), boundary: false, diagnostic: None }
}

/// Profile score of the negative binomial log-likelihood in `r`, with
/// `p = r / (r + mean)`, and its derivative. `exceed[j]` is the number of
/// observations greater than `j`.
fn profile_score(r: f64, exceed: &[f64], n: f64, mean: f64) -> (f64, f64) {
    let (mut s, mut ds) = (0.0, 0.0);
    for (j, e) in exceed.iter().enumerate() {
        let t = 1.0 / (r + j as f64);
        s += e * t;
        ds -= e * t * t;
    }
    (s + n * (r / (r + mean)).ln(), ds + n * mean / (r * (r + mean)))
}

fn negbin_fit(counts: &Counts, mean: f64) -> Result<ParametricFit> {
    let n = counts.n() as f64;
    let var = counts.iter().map(|(z, c)| c as f64 * (z as f64 - mean).powi(2)).sum::<f64>() / n;
    let poisson_limit = |why: &str| -> Result<ParametricFit> {
        let mut f = fit(ParametricFamily::NegBinomial, vec![f64::INFINITY, 1.0], DistSpec::poisson(mean)?);
        f.boundary = true;
        f.diagnostic = Some(format!("{why}; using the Poisson limit r -> infinity"));
        Ok(f)
    };
    if var <= mean {
        return poisson_limit("sample variance does not exceed the mean");
    }
    let max = counts.max().unwrap() as usize;
    let mut exceed = vec![0.0; max];
    for (z, c) in counts.iter() {
        for e in exceed.iter_mut().take(z as usize) {
            *e += c as f64;
        }
    }
    let score = |r: f64| profile_score(r, &exceed, n, mean);

    // The score is positive near zero; find a sign change above the root.
    let mut lo = 1e-8;
    let mut hi = (mean * mean / (var - mean)).max(1e-6);
    while score(hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e10 {
            return poisson_limit("profile likelihood increases without bound in r");
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (s, ds) = score(r);
        if s > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let newton = r - s / ds;
        r = if ds < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (hi - lo) <= 1e-12 * r || s.abs() < 1e-12 * n {
            break;
        }
    }
    let p = r / (r + mean);
    Ok(fit(ParametricFamily::NegBinomial, vec![r, p], DistSpec::negbinomial(r, p)?))
}

/// Maximum likelihood fit of a parametric family. Counts must be
/// nonnegative.
pub fn fit_parametric(counts: &Counts, family: ParametricFamily) -> Result<ParametricFit> {
    if counts.is_empty() {
        return Err(Error::invalid("no observations"));
    }
    if counts.min().unwrap() < 0 {
        return Err(Error::invalid(format!("{family} needs nonnegative data")));
    }
    let mean = counts.mean();
    if mean == 0.0 {
        let params = match family {
            ParametricFamily::Poisson => vec![0.0],
            ParametricFamily::Geometric => vec![1.0],
            ParametricFamily::NegBinomial => vec![f64::INFINITY, 1.0],
        };
        return Ok(ParametricFit {
            family,
            params,
            pmf: Some(Pmf::point_mass(0)),
            boundary: true,
            diagnostic: Some("all observations are zero".into()),
        });
    }
    match family {
        ParametricFamily::Poisson => Ok(fit(family, vec![mean], DistSpec::poisson(mean)?)),
        ParametricFamily::Geometric => {
            let p = 1.0 / (1.0 + mean);
            Ok(fit(family, vec![p], DistSpec::geometric(p)?))
        }
        ParametricFamily::NegBinomial => negbin_fit(counts, mean),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let c = Counts::from_pairs([(0, 2), (2, 2), (4, 2)]);
        let f = fit_parametric(&c, ParametricFamily::Poisson).unwrap();
        assert_eq!(f.params, vec![2.0]);
        let c = Counts::from_pairs([(0, 1), (2, 1)]);
        let f = fit_parametric(&c, ParametricFamily::Geometric).unwrap();
        assert_eq!(f.params, vec![0.5]);
        assert!(fit_parametric(&Counts::from_pairs([(-1, 3)]), ParametricFamily::Poisson).is_err());
    }

    #[test]
    fn negbin_recovers_exact_histogram() {
        let truth = DistSpec::negbinomial(6.0, 0.3).unwrap();
        let n = 1e6;
        let c = Counts::from_pairs(truth.pmf().iter().map(|(z, p)| (z, (p * n).round() as u64)).filter(|t| t.1 > 0));
        let f = fit_parametric(&c, ParametricFamily::NegBinomial).unwrap();
        assert!(!f.boundary);
        assert!((f.params[0] - 6.0).abs() < 0.06, "{:?}", f.params);
        assert!((f.params[1] - 0.3).abs() < 0.003, "{:?}", f.params);
    }

    #[test]
    fn underdispersed_data_hit_the_boundary() {
        let c = Counts::from_pairs([(1, 5), (2, 5)]);
        let f = fit_parametric(&c, ParametricFamily::NegBinomial).unwrap();
        assert!(f.boundary);
        assert!(f.diagnostic.is_some());
        assert!((f.pmf().mean() - 1.5).abs() < 1e-9);
    }
}
