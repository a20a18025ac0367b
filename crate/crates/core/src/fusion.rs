//! Multi-view feature fusion and the MLP classifier trained on it.

use crate::backbones::{BackboneId, FeatureVector};
use crate::datasets::BinaryLabel;
use crate::error::{Error, Result};
use crate::kv::KvDoc;
use crate::nn::{self, AdamConfig, FitOptions, History, Mlp};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout: f64,
    pub hidden_units: usize,
    pub seed: u64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.6,
            beta2: 0.8,
            batch_size: 32,
            max_epochs: 1000,
            dropout: 0.5,
            hidden_units: 256,
            seed: 0,
            epsilon: 1e-8,
        }
    }
}

pub const TRAIN_KEYS: [&str; 9] = [
    "learning_rate",
    "beta1",
    "beta2",
    "batch_size",
    "max_epochs",
    "dropout",
    "hidden_units",
    "seed",
    "epsilon",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad("beta1 must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad("beta2 must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.hidden_units == 0 {
            return bad("hidden_units must be >= 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn fit_options(&self, first_trainable: usize) -> FitOptions {
        FitOptions {
            adam: self.adam(),
            batch_size: self.batch_size,
            epochs: self.max_epochs,
            seed: self.seed,
            first_trainable,
        }
    }

    pub fn from_kv(doc: &KvDoc, section: &str) -> Result<Self> {
        let s = doc.section(section);
        s.expect_keys(&TRAIN_KEYS)?;
        let d = Self::default();
        let cfg = Self {
            learning_rate: s.parse_or("learning_rate", d.learning_rate)?,
            beta1: s.parse_or("beta1", d.beta1)?,
            beta2: s.parse_or("beta2", d.beta2)?,
            batch_size: s.parse_or("batch_size", d.batch_size)?,
            max_epochs: s.parse_or("max_epochs", d.max_epochs)?,
            dropout: s.parse_or("dropout", d.dropout)?,
            hidden_units: s.parse_or("hidden_units", d.hidden_units)?,
            seed: s.parse_or("seed", d.seed)?,
            epsilon: s.parse_or("epsilon", d.epsilon)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical `key = value` text; floats keep full precision.
    pub fn to_text(&self) -> String {
        format!(
            "learning_rate = {:?}\nbeta1 = {:?}\nbeta2 = {:?}\nbatch_size = {}\nmax_epochs = {}\n\
             dropout = {:?}\nhidden_units = {}\nseed = {}\nepsilon = {:?}\n",
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.batch_size,
            self.max_epochs,
            self.dropout,
            self.hidden_units,
            self.seed,
            self.epsilon
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvDoc::parse(text)?, "")
    }
}

/// Contiguous slice of a fused vector contributed by one backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub backbone: BackboneId,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub values: Vec<f32>,
    pub layout: Vec<Segment>,
    pub sample_ref: usize,
    pub label: BinaryLabel,
}

impl FusedFeature {
    /// Values of one backbone's segment.
    pub fn segment(&self, backbone: BackboneId) -> Option<&[f32]> {
        self.layout
            .iter()
            .find(|s| s.backbone == backbone)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// Concatenate per-backbone features sample by sample, in the order the sets
/// are given. All sets must cover the same sample sequence.
pub fn fuse(feature_sets: &[Vec<FeatureVector>], labels: &[BinaryLabel]) -> Result<Vec<FusedFeature>> {
    let first = feature_sets
        .first()
        .ok_or_else(|| Error::InvalidInput("fusion needs at least one feature set".into()))?;
    let n = first.len();
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} samples but {} labels", labels.len())));
    }
    let mut layout = Vec::with_capacity(feature_sets.len());
    let mut offset = 0;
    for set in feature_sets {
        if set.len() != n {
            return Err(Error::InvalidInput(format!(
                "feature sets cover different samples: {} vs {n} vectors",
                set.len()
            )));
        }
        let Some(head) = set.first() else {
            return Err(Error::InvalidInput("empty feature set".into()));
        };
        let len = head.values.len();
        if let Some(bad) = set.iter().find(|v| v.values.len() != len) {
            return Err(Error::Shape(format!(
                "{}: sample {} has {} features, expected {len}",
                head.backbone,
                bad.sample_ref,
                bad.values.len()
            )));
        }
        if layout.iter().any(|s: &Segment| s.backbone == head.backbone) {
            return Err(Error::InvalidInput(format!("backbone {} fused twice", head.backbone)));
        }
        layout.push(Segment {
            backbone: head.backbone,
            offset,
            len,
        });
        offset += len;
    }
    (0..n)
        .map(|i| {
            let sample_ref = first[i].sample_ref;
            let mut values = Vec::with_capacity(offset);
            for set in feature_sets {
                let v = &set[i];
                if v.sample_ref != sample_ref {
                    return Err(Error::InvalidInput(format!(
                        "sample sequences diverge at position {i}: sample {sample_ref} vs {} ({})",
                        v.sample_ref, v.backbone
                    )));
                }
                if v.values.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "non-finite feature for sample {sample_ref} ({})",
                        v.backbone
                    )));
                }
                values.extend_from_slice(&v.values);
            }
            Ok(FusedFeature {
                values,
                layout: layout.clone(),
                sample_ref,
                label: labels[i],
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub network: Mlp,
    pub history: History,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: BinaryLabel,
    /// `[p_benign, p_malignant]`.
    pub probabilities: [f64; 2],
}

pub fn train_classifier(fused: &[FusedFeature], cfg: &TrainConfig) -> Result<ClassifierModel> {
    let inputs: Vec<Vec<f64>> = fused.iter().map(FusedFeature::as_f64).collect();
    let labels: Vec<BinaryLabel> = fused.iter().map(|f| f.label).collect();
    train_classifier_on(&inputs, &labels, cfg)
}

/// `train_classifier` on plain rows.
pub fn train_classifier_on(inputs: &[Vec<f64>], labels: &[BinaryLabel], cfg: &TrainConfig) -> Result<ClassifierModel> {
    cfg.validate()?;
    if inputs.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", inputs.len(), labels.len())));
    }
    let dim = inputs
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("no training samples".into()))?;
    for label in [BinaryLabel::Benign, BinaryLabel::Malignant] {
        let count = labels.iter().filter(|&&l| l == label).count();
        if count < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 {} samples to train, got {count}",
                label.as_str()
            )));
        }
    }
    if let Some(i) = inputs.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput(format!("non-finite feature in training row {i}")));
    }
    let targets: Vec<usize> = labels.iter().map(|l| l.code() as usize).collect();
    let mut network = Mlp::classifier(dim, cfg.hidden_units, 2, cfg.dropout, cfg.seed);
    let history = nn::fit(&mut network, inputs, &targets, &cfg.fit_options(0))?;
    Ok(ClassifierModel {
        network,
        history,
        config: *cfg,
    })
}

pub fn predict_values(model: &ClassifierModel, values: &[f64]) -> Result<Prediction> {
    if values.len() != model.network.input_dim() {
        return Err(Error::Shape(format!(
            "model expects {} features, got {}",
            model.network.input_dim(),
            values.len()
        )));
    }
    let p = model.network.predict_proba(values);
    let label = if p[1] > p[0] {
        BinaryLabel::Malignant
    } else {
        BinaryLabel::Benign
    };
    Ok(Prediction {
        label,
        probabilities: [p[0], p[1]],
    })
}

pub fn predict(model: &ClassifierModel, fused: &FusedFeature) -> Result<Prediction> {
    predict_values(model, &fused.as_f64())
}
