use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::accum;
use crate::error::{Error, Result};
use crate::pmf::{self, Counts, Pmf};
use crate::rng::Rng;

/// Tail mass dropped when truncating an unbounded family.
pub const TRUNCATION_MASS: f64 = 1e-12;
const MAX_WINDOW: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    Poisson {
        lambda: f64,
    },
    /// `p (1 - p)^z` on `{0, 1, ...}`.
    Geometric {
        p: f64,
    },
    /// `C(z + r - 1, z) p^r (1 - p)^z`, mean `r (1 - p) / p`.
    NegBinomial {
        r: f64,
        p: f64,
    },
    /// Piecewise-linear log-pmf on `{1, ..., a}` with slope 4/3 up to 7 and
    /// slope `(16 - a) / (a - 7)` afterwards.
    Triangular {
        a: i64,
    },
    Custom,
}

/// A distribution on the integers with its (truncated) pmf and an
/// inverse-CDF sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct DistSpec {
    family: Family,
    pmf: Pmf,
    cdf: Vec<f64>,
}

/// Builds the pmf from `log p(0)` and the log-ratio `log p(z+1)/p(z)`,
/// stopping once the remaining mass is below [`TRUNCATION_MASS`].
fn truncated(log_first: f64, log_ratio: impl Fn(usize) -> f64, mean: f64) -> Result<Pmf> {
    let mut probs = vec![log_first.exp()];
    let mut log_p = log_first;
    let mut total = accum::Neumaier::new();
    total.add(probs[0]);
    let mut z = 0usize;
    while (1.0 - total.value() > TRUNCATION_MASS / 10.0 || (z as f64) < mean) && probs.len() < MAX_WINDOW {
        log_p += log_ratio(z);
        z += 1;
        let p = log_p.exp();
        probs.push(p);
        total.add(p);
    }
    if probs.len() >= MAX_WINDOW {
        return Err(Error::invalid("distribution too spread out to tabulate"));
    }
    Pmf::from_weights(0, probs)
}

impl DistSpec {
    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!("Poisson rate {lambda} must be positive")));
        }
        let ln_l = lambda.ln();
        if lambda > 500.0 {
            return Err(Error::invalid("Poisson rate above 500 is not supported"));
        }
        let pmf = truncated(-lambda, |z| ln_l - ((z + 1) as f64).ln(), lambda)?;
        Ok(Self::build(Family::Poisson { lambda }, pmf))
    }

    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!("geometric p = {p} must be in (0, 1]")));
        }
        let pmf = if p == 1.0 {
            Pmf::point_mass(0)
        } else {
            let lq = (1.0 - p).ln();
            truncated(p.ln(), |_| lq, (1.0 - p) / p)?
        };
        Ok(Self::build(Family::Geometric { p }, pmf))
    }

    pub fn negbinomial(r: f64, p: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) || !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!("negative binomial needs r > 0 and p in (0, 1], got r = {r}, p = {p}")));
        }
        let pmf = if p == 1.0 {
            Pmf::point_mass(0)
        } else {
            let lq = (1.0 - p).ln();
            truncated(r * p.ln(), |z| ((z as f64 + r) / (z + 1) as f64).ln() + lq, r * (1.0 - p) / p)?
        };
        Ok(Self::build(Family::NegBinomial { r, p }, pmf))
    }

    pub fn triangular(a: i64) -> Result<Self> {
        if a < 8 {
            return Err(Error::invalid(format!("triangular endpoint a = {a} must be at least 8")));
        }
        let log_w: Vec<f64> = (1..=a)
            .map(|x| {
                if x <= 7 {
                    4.0 * (x - 1) as f64 / 3.0
                } else {
                    (16 - a) as f64 * (x - 7) as f64 / (a - 7) as f64 + 8.0
                }
            })
            .collect();
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pmf = Pmf::from_weights(1, log_w.iter().map(|l| (l - top).exp()).collect())?;
        Ok(Self::build(Family::Triangular { a }, pmf))
    }

    pub fn custom(pmf: Pmf) -> Self {
        Self::build(Family::Custom, pmf)
    }

    fn build(family: Family, pmf: Pmf) -> Self {
        let cdf = pmf.cdf().values().to_vec();
        Self { family, pmf, cdf }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn pmf(&self) -> &Pmf {
        &self.pmf
    }

    pub fn is_log_concave(&self) -> bool {
        pmf::is_log_concave(&self.pmf)
    }

    /// Interior knots of the log-pmf: points where the second difference of
    /// the log-pmf is negative beyond `1e-9`.
    pub fn interior_knots(&self) -> Vec<i64> {
        let lp = self.pmf.log_probs();
        (1..lp.len().saturating_sub(1))
            .filter(|&i| lp[i - 1] - 2.0 * lp[i] + lp[i + 1] < -1e-9)
            .map(|i| self.pmf.origin() + i as i64)
            .collect()
    }

    pub fn draw(&self, rng: &mut Rng) -> i64 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|c| *c < u).min(self.cdf.len() - 1);
        self.pmf.origin() + idx as i64
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Counts {
        let mut counts = Counts::new();
        for _ in 0..n {
            counts.add(self.draw(rng), 1);
        }
        counts
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Poisson { lambda } => write!(f, "poisson:{lambda}"),
            Family::Geometric { p } => write!(f, "geometric:{p}"),
            Family::NegBinomial { r, p } => write!(f, "negbin:{r},{p}"),
            Family::Triangular { a } => write!(f, "triangular:{a}"),
            Family::Custom => write!(f, "custom"),
        }
    }
}

/// Parses `poisson:2`, `geometric:0.5`, `negbin:6,0.3` and `triangular:11`.
impl FromStr for DistSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) =
            s.split_once(':').ok_or_else(|| Error::invalid(format!("expected family:params, got {s:?}")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad parameter {a:?} in {s:?}"))))
            .collect::<Result<_>>()?;
        let want = |k: usize| {
            if nums.len() == k {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} takes {k} parameter(s), got {}", nums.len())))
            }
        };
        match name.trim().to_ascii_lowercase().as_str() {
            "poisson" | "pois" => want(1).and_then(|_| Self::poisson(nums[0])),
            "geometric" | "geom" => want(1).and_then(|_| Self::geometric(nums[0])),
            "negbin" | "nbin" | "negbinomial" => want(2).and_then(|_| Self::negbinomial(nums[0], nums[1])),
            "triangular" | "tri" => {
                want(1)?;
                if nums[0].fract() != 0.0 {
                    return Err(Error::invalid("triangular endpoint must be an integer"));
                }
                Self::triangular(nums[0] as i64)
            }
            other => Err(Error::invalid(format!("unknown family {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn masses_and_means() {
        let p = DistSpec::poisson(2.0).unwrap();
        assert!((p.pmf().prob(0) - (-2.0f64).exp()).abs() < 1e-13);
        assert!((p.pmf().mean() - 2.0).abs() < 1e-10);
        let g = DistSpec::geometric(0.5).unwrap();
        assert!((g.pmf().prob(2) - 0.125).abs() < 1e-13);
        let nb = DistSpec::negbinomial(6.0, 0.3).unwrap();
        assert!((nb.pmf().mean() - 14.0).abs() < 1e-9);
        assert!((nb.pmf().variance() - 6.0 * 0.7 / 0.09).abs() < 1e-7);
        assert!((nb.pmf().prob(0) - 0.3f64.powi(6)).abs() < 1e-13);
    }

    #[test]
    fn triangular_shape() {
        for a in 8..=20 {
            let t = DistSpec::triangular(a).unwrap();
            let total: f64 = t.pmf().probs().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!((t.pmf().origin(), t.pmf().last()), (1, a));
            assert_eq!(t.is_log_concave(), a >= 11, "a = {a}");
        }
        let t = DistSpec::triangular(11).unwrap();
        assert_eq!(t.interior_knots(), vec![7]);
        let lp = t.pmf().log_probs();
        assert!((lp[6] - lp[5] - 4.0 / 3.0).abs() < 1e-12);
        assert!((lp[7] - lp[6] - 1.25).abs() < 1e-12);
        assert!(DistSpec::triangular(7).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in ["poisson:2", "geometric:0.5", "negbin:6,0.3", "triangular:11"] {
            let d: DistSpec = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("poisson".parse::<DistSpec>().is_err());
        assert!("poisson:-1".parse::<DistSpec>().is_err());
        assert!("negbin:6".parse::<DistSpec>().is_err());
        assert!("beta:1,2".parse::<DistSpec>().is_err());
    }

    #[test]
    fn sampler_matches_pmf() {
        let d = DistSpec::poisson(2.0).unwrap();
        let mut r = rng::stream(1, 0);
        let n = 200_000;
        let c = d.sample(n, &mut r);
        for (z, p) in d.pmf().iter() {
            assert!((c.get(z) as f64 / n as f64 - p).abs() < 0.005);
        }
    }
}
