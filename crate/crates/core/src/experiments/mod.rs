//! Parametric baselines, target distributions and the Monte Carlo harness.

pub mod dist;
pub mod harness;
pub mod parametric;

pub use dist::{DistSpec, Family};
pub use harness::{
    ci_length_experiment, ci_length_for, knot_recovery, median, rate_check, run_comparison, spearman, CiLengthTable,
    Estimator, KnotRecovery, RateReport, SimReport,
};
pub use parametric::{fit_parametric, ParametricFamily, ParametricFit};
