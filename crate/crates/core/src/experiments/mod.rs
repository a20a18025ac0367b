//! Evaluation metrics, baselines, comparison reports and experiment runs.

mod baselines;
mod metrics;
mod report;
pub mod tree;

use std::path::Path;

pub use baselines::{baseline_adapter, read_predictions, BaselineRegistry, ExternalBaseline, DECISION_TREE};
pub use metrics::{
    confusion, f1_score, format_pct, metrics, round2, ConfusionCounts, MetricsReport, Ratio, METRIC_NAMES,
};
pub use report::{render_report, ComparisonReport, RenderedReport, ReportRow, REPORT_HEADER};

use crate::datasets::DatasetManifest;
use crate::error::{Error, Result};
use crate::pipeline::{run_pipeline, ManifestSource, PipelineConfig};

/// Run the full pipeline on `manifest` and return the fused model's row.
pub fn run_experiment(manifest: &DatasetManifest, cfg: &PipelineConfig) -> Result<ReportRow> {
    let summary = run_pipeline(cfg, ManifestSource::Given(manifest.clone()))?;
    summary
        .report
        .rows()
        .iter()
        .find(|r| r.model_id == cfg.experiment.model_id)
        .cloned()
        .ok_or_else(|| Error::InvalidInput("pipeline produced no ensemble row".into()))
}

/// Gather every metrics JSON under `dir` (recursively, in path order) into
/// one report.
pub fn collect_runs(dir: &Path) -> Result<ComparisonReport> {
    let mut report = ComparisonReport::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(dir, e.into()))?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let row = ReportRow::from_json(&text).map_err(|e| match e {
            Error::Format { what, detail } => Error::Format {
                what,
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })?;
        report.push(row)?;
    }
    if report.rows().is_empty() {
        return Err(Error::NoSamples(dir.to_path_buf()));
    }
    Ok(report)
}
