//! Confusion counts and accuracy / precision / recall / F1, malignant positive.

use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: BinaryLabel, actual: BinaryLabel) {
        use BinaryLabel::{Benign, Malignant};
        match (predicted, actual) {
            (Malignant, Malignant) => self.tp += 1,
            (Malignant, Benign) => self.fp += 1,
            (Benign, Benign) => self.tn += 1,
            (Benign, Malignant) => self.fn_ += 1,
        }
    }
}

pub fn confusion(predictions: &[BinaryLabel], labels: &[BinaryLabel]) -> Result<ConfusionCounts> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        counts.record(p, l);
    }
    Ok(counts)
}

/// Exact rational `num / den`; a zero denominator reads as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    pub fn is_degenerate(self) -> bool {
        self.den == 0
    }

    /// Percentage with two decimals, rounded half away from zero in exact
    /// integer arithmetic.
    pub fn pct_string(self) -> String {
        if self.den == 0 {
            return "0.00".into();
        }
        let scaled = u128::from(self.num) * 10_000;
        let den = u128::from(self.den);
        let hundredths = (2 * scaled + den) / (2 * den);
        format!("{}.{:02}", hundredths / 100, hundredths % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the metric's denominator was zero and it was reported as 0.
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub f1_degenerate: bool,
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

impl MetricsReport {
    pub fn ratios(&self) -> [Ratio; 4] {
        let c = self.counts;
        [
            Ratio { num: c.tp + c.tn, den: c.total() },
            Ratio { num: c.tp, den: c.tp + c.fp },
            Ratio { num: c.tp, den: c.tp + c.fn_ },
            // harmonic mean of precision and recall, in count form
            Ratio { num: 2 * c.tp, den: 2 * c.tp + c.fp + c.fn_ },
        ]
    }

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }

    pub fn pct_strings(&self) -> [String; 4] {
        self.ratios().map(Ratio::pct_string)
    }

    /// Metrics JSON with fractions at 6 decimals and `*_pct` strings; `extra`
    /// entries are appended verbatim as already-encoded JSON values.
    pub fn to_json(&self, extra: &[(&str, String)]) -> String {
        let c = self.counts;
        let mut fields = vec![
            ("tp".to_string(), c.tp.to_string()),
            ("fp".to_string(), c.fp.to_string()),
            ("tn".to_string(), c.tn.to_string()),
            ("fn".to_string(), c.fn_.to_string()),
        ];
        for (name, v) in METRIC_NAMES.iter().zip(self.values()) {
            fields.push((name.to_string(), format!("{v:.6}")));
        }
        for (name, pct) in METRIC_NAMES.iter().zip(self.pct_strings()) {
            fields.push((format!("{name}_pct"), format!("\"{pct}\"")));
        }
        fields.push(("precision_degenerate".into(), self.precision_degenerate.to_string()));
        fields.push(("recall_degenerate".into(), self.recall_degenerate.to_string()));
        fields.push(("f1_degenerate".into(), self.f1_degenerate.to_string()));
        for (k, v) in extra {
            fields.push((k.to_string(), v.clone()));
        }
        let body: Vec<String> = fields.iter().map(|(k, v)| format!("  \"{k}\": {v}")).collect();
        format!("{{\n{}\n}}\n", body.join(",\n"))
    }
}

pub fn metrics(counts: ConfusionCounts) -> Result<MetricsReport> {
    if counts.total() == 0 {
        return Err(Error::InvalidInput("metrics need at least one evaluated sample".into()));
    }
    let mut report = MetricsReport {
        counts,
        accuracy: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        precision_degenerate: false,
        recall_degenerate: false,
        f1_degenerate: false,
    };
    let [acc, prec, rec, _] = report.ratios();
    report.accuracy = acc.value();
    report.precision = prec.value();
    report.recall = rec.value();
    report.precision_degenerate = prec.is_degenerate();
    report.recall_degenerate = rec.is_degenerate();
    report.f1 = f1_score(report.precision, report.recall);
    report.f1_degenerate = report.precision + report.recall == 0.0;
    Ok(report)
}

/// Harmonic mean; 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Round half away from zero to two decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn format_pct(fraction: f64) -> String {
    format!("{:.2}", round2(fraction * 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::{Benign as B, Malignant as M};

    #[test]
    fn confusion_examples() {
        let c = confusion(&[M, M, M, B, B], &[M, M, M, B, B]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 3, fp: 0, tn: 2, fn_: 0 });
        let c = confusion(&[B; 4], &[M; 4]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 0, tn: 0, fn_: 4 });
        let c = confusion(&[M, M, B, B], &[M, B, M, B]).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert!(confusion(&[M], &[]).is_err());
    }

    #[test]
    fn metrics_examples() {
        let r = metrics(ConfusionCounts { tp: 3, fp: 1, tn: 2, fn_: 2 }).unwrap();
        assert_eq!(r.pct_strings(), ["62.50", "75.00", "60.00", "66.67"].map(String::from));
        let r = metrics(ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 }).unwrap();
        assert_eq!(r.values(), [1.0; 4]);
        assert!(metrics(ConfusionCounts::default()).is_err());
    }

    #[test]
    fn degenerate_denominators_flagged() {
        let r = metrics(ConfusionCounts { tp: 0, fp: 0, tn: 5, fn_: 0 }).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.precision_degenerate && r.recall_degenerate && r.f1_degenerate);
        assert_eq!(r.accuracy, 1.0);
    }

    #[test]
    fn pct_rounding_is_half_away_from_zero() {
        assert_eq!(Ratio { num: 1, den: 8 }.pct_string(), "12.50");
        assert_eq!(Ratio { num: 2, den: 3 }.pct_string(), "66.67");
        // 1/16 = 6.25 %, 1/32 = 3.125 % -> 3.13
        assert_eq!(Ratio { num: 1, den: 32 }.pct_string(), "3.13");
        assert_eq!(Ratio { num: 1, den: 1 }.pct_string(), "100.00");
        assert_eq!(round2(2.675_000_000_1), 2.68);
    }

    #[test]
    fn json_shape() {
        let r = metrics(ConfusionCounts { tp: 3, fp: 1, tn: 2, fn_: 2 }).unwrap();
        let j = r.to_json(&[("model_id", "\"m\"".into())]);
        let v: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(v["fn"], 2);
        assert_eq!(v["precision_pct"], "75.00");
        assert_eq!(v["model_id"], "m");
        assert!(j.contains("\"accuracy\": 0.625000"));
    }
}
