//! Metrics, k-fold cross-validation, score summaries, reports, and boxplots.

mod boxplot;
mod crossval;
mod metrics;
mod report;
mod summary;

pub use boxplot::render_boxplot;
pub use crossval::{cross_validate, cross_validate_map, evaluate_model, fold_partition, FoldScores};
pub use metrics::{compute_metrics, ConfusionMatrix, Metrics};
pub use report::{csv_row_count, emit_report, parse_report, EvaluationReport, ReportFormat, REPORT_FORMAT_VERSION};
pub use summary::{quantile, summarize_scores, ScoreSummary};

#[cfg(test)]
mod tests;
