//! Comparison reports: CSV, aligned text, and a model × dataset accuracy grid.

use std::collections::BTreeSet;
use std::path::Path;

use super::metrics::{metrics, ConfusionCounts, MetricsReport};
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 8] = [
    "model_id",
    "dataset_id",
    "accuracy_pct",
    "precision_pct",
    "recall_pct",
    "f1_pct",
    "manifest_sha256",
    "seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model_id: String,
    pub dataset_id: String,
    pub metrics: MetricsReport,
    pub manifest_sha256: String,
    pub seed: u64,
}

impl ReportRow {
    /// Metrics JSON carrying the row's provenance.
    pub fn to_json(&self) -> String {
        let quote = |s: &str| serde_json::Value::String(s.to_string()).to_string();
        self.metrics.to_json(&[
            ("model_id", quote(&self.model_id)),
            ("dataset_id", quote(&self.dataset_id)),
            ("manifest_sha256", quote(&self.manifest_sha256)),
            ("seed", self.seed.to_string()),
        ])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("metrics JSON", d);
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let count = |k: &str| v[k].as_u64().ok_or_else(|| bad(format!("missing count {k:?}")));
        let string = |k: &str| {
            v[k].as_str()
                .map(str::to_string)
                .ok_or_else(|| bad(format!("missing string {k:?}")))
        };
        let counts = ConfusionCounts {
            tp: count("tp")?,
            fp: count("fp")?,
            tn: count("tn")?,
            fn_: count("fn")?,
        };
        Ok(Self {
            model_id: string("model_id")?,
            dataset_id: string("dataset_id")?,
            metrics: metrics(counts)?,
            manifest_sha256: string("manifest_sha256")?,
            seed: count("seed")?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    rows: Vec<ReportRow>,
    /// `(name, sha256)` of every config block that fed the rows.
    pub config_hashes: Vec<(String, String)>,
}

impl ComparisonReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self) -> &[ReportRow] {
        &self.rows
    }

    pub fn push(&mut self, row: ReportRow) -> Result<()> {
        if self
            .rows
            .iter()
            .any(|r| r.model_id == row.model_id && r.dataset_id == row.dataset_id)
        {
            return Err(Error::InvalidInput(format!(
                "duplicate report row ({}, {})",
                row.model_id, row.dataset_id
            )));
        }
        self.rows.push(row);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedReport {
    pub csv: String,
    pub table: String,
    /// Accuracy per dataset (rows) and model (columns); `None` for one model.
    pub grid: Option<String>,
}

impl RenderedReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: &str| {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
        };
        write("report.csv", &self.csv)?;
        write("report.txt", &self.table)?;
        if let Some(grid) = &self.grid {
            write("grid.txt", grid)?;
        }
        Ok(())
    }
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn render_report(report: &ComparisonReport) -> Result<RenderedReport> {
    if report.rows.is_empty() {
        return Err(Error::InvalidInput("report has no rows".into()));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for r in &report.rows {
        let [a, p, rc, f] = r.metrics.pct_strings();
        w.write_record([
            r.model_id.as_str(),
            r.dataset_id.as_str(),
            &a,
            &p,
            &rc,
            &f,
            &r.manifest_sha256,
            &r.seed.to_string(),
        ])?;
    }
    let csv = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?)
        .expect("csv output is UTF-8");

    let mut table = vec![["model", "dataset", "accuracy", "precision", "recall", "f1"].map(String::from).to_vec()];
    for r in &report.rows {
        let mut row = vec![r.model_id.clone(), r.dataset_id.clone()];
        row.extend(r.metrics.pct_strings().iter().map(|p| format!("{p}%")));
        table.push(row);
    }

    let models: Vec<&str> = {
        let mut seen = Vec::new();
        for r in &report.rows {
            if !seen.contains(&r.model_id.as_str()) {
                seen.push(r.model_id.as_str());
            }
        }
        seen
    };
    let grid = (models.len() > 1).then(|| {
        let datasets: BTreeSet<&str> = report.rows.iter().map(|r| r.dataset_id.as_str()).collect();
        let mut g = vec![std::iter::once(String::new()).chain(models.iter().map(|m| m.to_string())).collect::<Vec<_>>()];
        for d in datasets {
            let mut line = vec![d.to_string()];
            for m in &models {
                let cell = report
                    .rows
                    .iter()
                    .find(|r| r.dataset_id == d && r.model_id == *m)
                    .map_or("-".to_string(), |r| format!("{}%", r.metrics.pct_strings()[0]));
                line.push(cell);
            }
            g.push(line);
        }
        aligned(&g)
    });

    Ok(RenderedReport {
        csv,
        table: aligned(&table),
        grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, tp: u64) -> ReportRow {
        ReportRow {
            model_id: model.into(),
            dataset_id: "iciar".into(),
            metrics: metrics(ConfusionCounts { tp, fp: 1, tn: 3, fn_: 1 }).unwrap(),
            manifest_sha256: "ab".repeat(32),
            seed: 7,
        }
    }

    #[test]
    fn one_row_csv() {
        let mut rep = ComparisonReport::new();
        rep.push(row("ensemble", 3)).unwrap();
        let r = render_report(&rep).unwrap();
        let lines: Vec<&str> = r.csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], REPORT_HEADER.join(","));
        assert!(lines[1].starts_with("ensemble,iciar,75.00,75.00,75.00,75.00,abab"));
        assert!(r.grid.is_none());
    }

    #[test]
    fn duplicate_rejected_and_grid_built() {
        let mut rep = ComparisonReport::new();
        for m in ["stub_a", "stub_b", "stub_c", "ensemble"] {
            rep.push(row(m, 3)).unwrap();
        }
        assert!(rep.push(row("stub_b", 1)).is_err());
        let r = render_report(&rep).unwrap();
        let grid = r.grid.unwrap();
        let lines: Vec<&str> = grid.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].contains("stub_a") && lines[0].ends_with("ensemble"));
        assert_eq!(lines[1].matches("75.00%").count(), 4);
        assert!(render_report(&ComparisonReport::new()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = row("ensemble", 5);
        assert_eq!(ReportRow::from_json(&r.to_json()).unwrap(), r);
    }
}
