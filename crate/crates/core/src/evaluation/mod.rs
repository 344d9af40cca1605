//! Prediction metrics, baseline policies and the policy comparison harness.

mod harness;
mod metrics;
mod policies;

pub use harness::{
    fit_forecaster, run_comparison, run_trial, write_comparison, Comparison, ComparisonConfig, ComparisonRow,
    ForecastSetup, Forecaster, Method, TrialConfig, TrialOutcome, PER_DAY_CHOICES, TOTAL_DAY_CHOICES,
};
pub use metrics::{mean_abs_error, metrics, MetricReport, StepMetrics, MAPE_FLOOR};
pub use policies::{
    collect_measurements, fold_observations, heuristic_policy, random_policy, FoldRule, Observation,
};
