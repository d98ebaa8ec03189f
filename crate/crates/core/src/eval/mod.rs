//! Macro one-vs-all metrics, AUC, relative obtainable improvement, run
//! summaries and the paired one-tailed t-test.

mod metrics;
mod stats;

pub use metrics::{
    accuracy, auc_ova, macro_metrics, AucReport, ClassMetrics, ConfusionCounts, MetricsReport,
};
pub use stats::{
    ln_gamma, paired_t_test_one_tailed, regularized_incomplete_beta, roi, student_t_upper_tail,
    summarize_runs, RunSummary, TTestResult, CI_Z,
};
