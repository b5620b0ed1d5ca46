//! Pearson correlation with p-values, Gaussian KDE, and the emotion–feature report.

mod kde;
mod pearson;
mod report;

pub use kde::{kde, silverman_bandwidth, KdeCurve, DEFAULT_GRID_SIZE, GRID_PADDING};
pub use pearson::{p_value, pearson, CorrelationResult, SIGNIFICANCE_LEVEL};
pub use report::{
    bar_counts, correlation_report, feature_column, kde_table, CorrelationReport, ReportRow,
    BINARY, FEATURES, MULTISCALE, TARGETS, WEAK_THRESHOLD,
};
