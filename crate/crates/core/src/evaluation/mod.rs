//! Rolling-origin evaluation, error metrics, paired tests and diagnostics.

pub mod diagnostics;
pub mod metrics;
pub mod paired;
pub mod splits;

use thiserror::Error;

pub use diagnostics::{
    agreement, avl_cross_check, ccc, cv, diagnostics, error_demand_regression, iqr_over_median, kendall_tau_b,
    mad_over_median, pearson, spearman, Agreement, DiagnosticsReport, ErrorDemandFit,
};
pub use metrics::{bucket_of, bucketed_metrics, hourly_metrics, metrics, MetricSet, StratumMetrics, BUCKET_LABELS};
pub use paired::{cliffs_delta, compare_frameworks, wilcoxon_signed_rank, PairedTestResult, Verdict, Wilcoxon};
pub use splits::{months_of, rolling_splits, Month, SplitPlan};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("all paired differences are zero")]
    NoNonzeroDifferences,
    #[error("month {month} has {days} days; a split needs at least {needed}")]
    MonthTooShort { month: String, days: u32, needed: u32 },
    #[error("horizons must be positive (H1 = {h1}, H2 = {h2})")]
    BadHorizon { h1: u32, h2: u32 },
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("predictor has zero variance")]
    DegenerateVariance,
    #[error("{0}")]
    Input(String),
}
