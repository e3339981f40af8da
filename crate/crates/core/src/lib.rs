//! Nonparametric maximum likelihood estimation of log-concave probability mass
//! functions on the integers.
//!
//! The crate covers the estimator itself ([`solver`]), its optimality
//! conditions ([`fenchel`]), Kullback-Leibler projection onto the log-concave
//! class ([`projection`]), pointwise confidence intervals drawn from the
//! limiting distribution ([`limit`], backed by [`concave_ls`]), point-mass
//! inflated mixtures ([`mixture`]), and a Monte Carlo harness
//! ([`experiments`]).

pub mod accum;
pub mod concave_ls;
pub mod error;
pub mod experiments;
pub mod fenchel;
mod hat;
pub mod io;
pub mod limit;
pub mod mixture;
pub mod parallel;
pub mod pmf;
pub mod projection;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
pub use pmf::{Cdf, Counts, Metric, Pmf};
pub use solver::{fit_mle, fit_weighted, FittedLogConcave, KnotSet, SolverOptions, WeightedProblem};
