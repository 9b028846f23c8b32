use serde::{Deserialize, Serialize};

use super::crossval::FoldScores;
use super::summary::{summarize_scores, ScoreSummary};
use crate::model::PipelineSpec;
use crate::{Error, Result};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationReport {
    pub format_version: u32,
    pub pipeline: PipelineSpec,
    pub k: usize,
    pub seed: u64,
    pub corpus_digest: String,
    pub scores: FoldScores,
    pub summary: ScoreSummary,
    /// Wall-clock seconds per fold; absent unless requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_seconds: Option<Vec<f64>>,
}

impl EvaluationReport {
    pub fn new(pipeline: PipelineSpec, seed: u64, corpus_digest: String, scores: FoldScores) -> Result<Self> {
        let summary = summarize_scores(&scores.f1)?;
        Ok(EvaluationReport {
            format_version: REPORT_FORMAT_VERSION,
            pipeline,
            k: scores.len(),
            seed,
            corpus_digest,
            scores,
            summary,
            timing_seconds: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

const SUMMARY_ROWS: [&str; 7] = ["median", "mean", "std", "min", "max", "q1", "q3"];

fn summary_row(name: &str, s: &ScoreSummary) -> f64 {
    match name {
        "median" => s.median,
        "mean" => s.mean,
        "std" => s.std,
        "min" => s.min,
        "max" => s.max,
        "q1" => s.q1,
        _ => s.q3,
    }
}

/// JSON: pretty-printed report with a trailing newline. CSV: one row per fold,
/// then one row per summary statistic for each metric column.
pub fn emit_report(report: &EvaluationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let sc = &report.scores;
            let columns = [&sc.f1, &sc.precision, &sc.recall, &sc.accuracy];
            let summaries = columns.iter().map(|c| summarize_scores(c)).collect::<Result<Vec<_>>>()?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
            w.write_record(["fold", "f1", "precision", "recall", "accuracy"]).map_err(csv_err)?;
            for i in 0..sc.len() {
                let mut row = vec![i.to_string()];
                row.extend(columns.iter().map(|c| c[i].to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
            for name in SUMMARY_ROWS {
                let mut row = vec![name.to_string()];
                row.extend(summaries.iter().map(|s| summary_row(name, s).to_string()));
                w.write_record(&row).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
    }
}

pub fn parse_report(json: &str) -> Result<EvaluationReport> {
    Ok(serde_json::from_str(json)?)
}

/// Number of data rows `emit_report` writes in CSV form for `k` folds.
pub fn csv_row_count(k: usize) -> usize {
    k + SUMMARY_ROWS.len()
}
