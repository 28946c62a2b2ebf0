//! System-level correlation harness, fold planning and grid tuning.

mod corr;
mod folds;
mod report;
mod tune;

pub use corr::{
    correlate_scalar, correlate_systems, kendall_tau, pearson_r, spearman_rho, Coefficients,
};
pub use folds::{make_folds, FoldPlan, FoldSpec};
pub use report::{read_report, render_table, write_report, CorrelationReport, ReportEntry};
pub use tune::{tune, TuneResult};
