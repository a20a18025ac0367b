//! Baseline classifiers run on the same fused features as the ensemble.
//!
//! Besides the built-in decision tree, any program can be registered as an
//! external baseline. It is invoked as
//!
//! ```text
//! <command...> <train.hfv> <test.hfv> <predictions.txt>
//! ```
//!
//! and must write one label per test row (`0`/`1` or `benign`/`malignant`),
//! one per line, then exit 0.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::tree::{DecisionTree, TreeParams};
use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DECISION_TREE: &str = "decision_tree";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalBaseline {
    pub id: String,
    pub command: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BaselineRegistry {
    external: Vec<ExternalBaseline>,
}

impl BaselineRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_external(&mut self, id: &str, command: Vec<String>) -> Result<()> {
        if id == DECISION_TREE || self.external.iter().any(|e| e.id == id) {
            return Err(Error::Config(format!("baseline {id:?} registered twice")));
        }
        if command.is_empty() {
            return Err(Error::Config(format!("baseline {id:?} has an empty command")));
        }
        self.external.push(ExternalBaseline {
            id: id.to_string(),
            command,
        });
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        std::iter::once(DECISION_TREE.to_string())
            .chain(self.external.iter().map(|e| e.id.clone()))
            .collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.ids().iter().any(|i| i == id)
    }

    fn unknown(&self, id: &str) -> Error {
        Error::UnknownBaseline {
            id: id.to_string(),
            available: self.ids().join(", "),
        }
    }

    pub fn check(&self, id: &str) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(self.unknown(id))
        }
    }
}

/// Fit baseline `id` on `train` and predict every row of `test`.
pub fn baseline_adapter(
    registry: &BaselineRegistry,
    id: &str,
    train: &FeatureMatrix,
    test: &FeatureMatrix,
) -> Result<Vec<BinaryLabel>> {
    if train.dim != test.dim {
        return Err(Error::Shape(format!(
            "train width {} != test width {}",
            train.dim, test.dim
        )));
    }
    if id == DECISION_TREE {
        let tree = DecisionTree::fit(&train.rows_f64(), &train.labels, TreeParams::default())?;
        return Ok(test.rows_f64().iter().map(|r| tree.predict(r)).collect());
    }
    let ext = registry
        .external
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| registry.unknown(id))?;
    run_external(ext, train, test)
}

fn scratch_dir() -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    std::env::temp_dir().join(format!(
        "histofuse-baseline-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ))
}

fn run_external(ext: &ExternalBaseline, train: &FeatureMatrix, test: &FeatureMatrix) -> Result<Vec<BinaryLabel>> {
    let dir = scratch_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let result = (|| {
        let train_path = dir.join("train.hfv");
        let test_path = dir.join("test.hfv");
        let pred_path = dir.join("predictions.txt");
        train.save(&train_path)?;
        test.save(&test_path)?;
        let status = Command::new(&ext.command[0])
            .args(&ext.command[1..])
            .arg(&train_path)
            .arg(&test_path)
            .arg(&pred_path)
            .status()
            .map_err(|e| Error::io(&ext.command[0], e))?;
        if !status.success() {
            return Err(Error::InvalidInput(format!("baseline {} exited with {status}", ext.id)));
        }
        read_predictions(&pred_path, test.len())
    })();
    let _ = std::fs::remove_dir_all(&dir);
    result
}

pub fn read_predictions(path: &Path, expected: usize) -> Result<Vec<BinaryLabel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let labels = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| match l.to_ascii_lowercase().as_str() {
            "0" | "benign" => Ok(BinaryLabel::Benign),
            "1" | "malignant" => Ok(BinaryLabel::Malignant),
            other => Err(Error::format("baseline predictions", format!("bad label {other:?}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != expected {
        return Err(Error::format(
            "baseline predictions",
            format!("{} labels for {expected} test rows", labels.len()),
        ));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id_lists_available() {
        let mut reg = BaselineRegistry::new();
        reg.register_external("bagging", vec!["true".into()]).unwrap();
        let m = FeatureMatrix::new(1, vec![0.0], vec![BinaryLabel::Benign]).unwrap();
        let err = baseline_adapter(&reg, "svm", &m, &m).unwrap_err().to_string();
        assert!(err.contains("svm") && err.contains("decision_tree") && err.contains("bagging"), "{err}");
        assert!(reg.register_external(DECISION_TREE, vec!["x".into()]).is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_command_round_trip() {
        let mut reg = BaselineRegistry::new();
        // predicts malignant for every test row
        let script = "n=$(od -An -tu4 -j4 -N4 \"$2\" | tr -d ' '); for i in $(seq 1 $n); do echo malignant; done > \"$3\"";
        reg.register_external("all_m", vec!["sh".into(), "-c".into(), script.into(), "sh".into()])
            .unwrap();
        let train = FeatureMatrix::new(1, vec![0.0, 1.0], vec![BinaryLabel::Benign, BinaryLabel::Malignant]).unwrap();
        let test = FeatureMatrix::new(1, vec![0.0, 1.0, 2.0], vec![BinaryLabel::Benign; 3]).unwrap();
        let preds = baseline_adapter(&reg, "all_m", &train, &test).unwrap();
        assert_eq!(preds, vec![BinaryLabel::Malignant; 3]);
    }
}
