//! Sectioned `key = value` pipeline configuration.
//!
//! ```text
//! [dataset]     id, root, train_fraction, seed, magnification
//! [preprocess]  stain_normalize, reference, od_threshold, angle_percentile,
//!               concentration_percentile, io_intensity, min_tissue_pixels,
//!               tissue_fallback, minmax
//! [augment]     horizontal_flip, vertical_flip, ... (augmentation keys)
//! [backbones]   ids, tap, freeze_body, finetune_epochs, weights.<id>
//! [train]       learning_rate, beta1, beta2, batch_size, max_epochs, ...
//! [experiment]  model_id, singles, baselines, external.<id>
//! [output]      dir
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::augment::AugmentConfig;
use crate::backbones::{BackboneId, FeatureTap, WeightsSource};
use crate::datasets::{DatasetId, Magnification};
use crate::error::{Error, Result};
use crate::experiments::BaselineRegistry;
use crate::fusion::TrainConfig;
use crate::kv::KvDoc;
use crate::preprocess::{MacenkoParams, MinMaxMode, TissueFallback};

pub const SECTIONS: [&str; 7] = [
    "dataset",
    "preprocess",
    "augment",
    "backbones",
    "train",
    "experiment",
    "output",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBlock {
    pub id: DatasetId,
    pub root: PathBuf,
    pub train_fraction: f64,
    pub seed: u64,
    pub magnification: Option<Magnification>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessBlock {
    pub stain_normalize: bool,
    /// Reference tile for the target stain model; defaults to the first
    /// train image that can be fitted.
    pub reference: Option<PathBuf>,
    pub macenko: MacenkoParams,
    pub tissue_fallback: TissueFallback,
    pub minmax: MinMaxMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackbonesBlock {
    pub ids: Vec<BackboneId>,
    pub weights: BTreeMap<BackboneId, PathBuf>,
    pub tap: FeatureTap,
    pub freeze_body: bool,
    pub finetune_epochs: usize,
}

impl BackbonesBlock {
    pub fn weights_source(&self, id: BackboneId) -> WeightsSource {
        match self.weights.get(&id) {
            Some(p) => WeightsSource::File(p.clone()),
            None if id.is_stub() => WeightsSource::None,
            None => WeightsSource::Imagenet,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentBlock {
    pub model_id: String,
    /// Also train and report one classifier per backbone.
    pub singles: bool,
    pub baselines: Vec<String>,
    pub registry: BaselineRegistry,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: DatasetBlock,
    pub preprocess: PreprocessBlock,
    pub augment: AugmentConfig,
    pub backbones: BackbonesBlock,
    pub train: TrainConfig,
    pub experiment: ExperimentBlock,
    pub output_dir: PathBuf,
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

fn list(raw: &str) -> Vec<String> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl PipelineConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        for name in doc.section_names() {
            if !SECTIONS.contains(&name) {
                return Err(Error::Config(format!("unknown section [{name}]")));
            }
        }

        let s = doc.section("dataset");
        s.expect_keys(&["id", "root", "train_fraction", "seed", "magnification"])?;
        let id: DatasetId = s
            .raw("id")
            .ok_or_else(|| Error::Config("[dataset] id is required".into()))?
            .parse()?;
        let root = resolve(
            base_dir,
            s.raw("root")
                .ok_or_else(|| Error::Config("[dataset] root is required".into()))?,
        );
        let magnification = match s.raw("magnification") {
            None | Some("") | Some("all") => None,
            Some(m) => Some(m.parse()?),
        };
        let dataset = DatasetBlock {
            id,
            root,
            train_fraction: s.parse_or("train_fraction", 0.8)?,
            seed: s.parse_or("seed", 0)?,
            magnification,
        };

        let s = doc.section("preprocess");
        s.expect_keys(&[
            "stain_normalize",
            "reference",
            "od_threshold",
            "angle_percentile",
            "concentration_percentile",
            "io_intensity",
            "min_tissue_pixels",
            "tissue_fallback",
            "minmax",
        ])?;
        let d = MacenkoParams::default();
        let tissue_fallback = match s.raw("tissue_fallback") {
            None | Some("pass_through") => TissueFallback::PassThrough,
            Some("fail") => TissueFallback::Fail,
            Some(o) => return Err(Error::Config(format!("[preprocess] tissue_fallback {o:?}: use pass_through or fail"))),
        };
        let minmax = match s.raw("minmax") {
            None | Some("global") => MinMaxMode::Global,
            Some("per_channel") => MinMaxMode::PerChannel,
            Some(o) => return Err(Error::Config(format!("[preprocess] minmax {o:?}: use global or per_channel"))),
        };
        let preprocess = PreprocessBlock {
            stain_normalize: s.bool_or("stain_normalize", true)?,
            reference: s.raw("reference").map(|r| resolve(base_dir, r)),
            macenko: MacenkoParams {
                od_threshold: s.parse_or("od_threshold", d.od_threshold)?,
                angle_percentile: s.parse_or("angle_percentile", d.angle_percentile)?,
                concentration_percentile: s.parse_or("concentration_percentile", d.concentration_percentile)?,
                io_intensity: s.parse_or("io_intensity", d.io_intensity)?,
                min_tissue_pixels: s.parse_or("min_tissue_pixels", d.min_tissue_pixels)?,
            },
            tissue_fallback,
            minmax,
        };

        let augment = AugmentConfig::from_kv(&doc, "augment")?;

        let s = doc.section("backbones");
        s.expect_keys(&["ids", "tap", "freeze_body", "finetune_epochs", "weights."])?;
        let ids = list(s.raw("ids").unwrap_or("vgg19,mobilenetv2,densenet201"))
            .iter()
            .map(|i| i.parse())
            .collect::<Result<Vec<BackboneId>>>()?;
        let mut weights = BTreeMap::new();
        for key in s.keys().filter(|k| k.starts_with("weights.")) {
            let id: BackboneId = key["weights.".len()..].parse()?;
            weights.insert(id, resolve(base_dir, s.raw(key).unwrap_or_default()));
        }
        let backbones = BackbonesBlock {
            ids,
            weights,
            tap: s.parse_or("tap", FeatureTap::Head)?,
            freeze_body: s.bool_or("freeze_body", false)?,
            finetune_epochs: s.parse_or("finetune_epochs", 20)?,
        };

        let train = TrainConfig::from_kv(&doc, "train")?;

        let s = doc.section("experiment");
        s.expect_keys(&["model_id", "singles", "baselines", "external."])?;
        let mut registry = BaselineRegistry::new();
        for key in s.keys().filter(|k| k.starts_with("external.")) {
            let command: Vec<String> = s
                .raw(key)
                .unwrap_or_default()
                .split_whitespace()
                .map(String::from)
                .collect();
            registry.register_external(&key["external.".len()..], command)?;
        }
        let experiment = ExperimentBlock {
            model_id: s.raw("model_id").unwrap_or("ensemble").to_string(),
            singles: s.bool_or("singles", true)?,
            baselines: list(s.raw("baselines").unwrap_or("decision_tree")),
            registry,
        };

        let s = doc.section("output");
        s.expect_keys(&["dir"])?;
        let output_dir = resolve(base_dir, s.raw("dir").unwrap_or("out"));

        let cfg = Self {
            dataset,
            preprocess,
            augment,
            backbones,
            train,
            experiment,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Every block against its own invariants; runs before any stage.
    pub fn validate(&self) -> Result<()> {
        let f = self.dataset.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Config(format!("[dataset] train_fraction {f} must lie in (0, 1)")));
        }
        self.preprocess.macenko.validate()?;
        self.augment.validate()?;
        self.train.validate()?;
        let ids = &self.backbones.ids;
        if ids.is_empty() {
            return Err(Error::Config("[backbones] ids is empty".into()));
        }
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(Error::Config(format!("[backbones] {id} listed twice")));
            }
        }
        for id in self.backbones.weights.keys() {
            if !ids.contains(id) {
                return Err(Error::Config(format!("[backbones] weights given for unused backbone {id}")));
            }
        }
        let model_id = &self.experiment.model_id;
        if model_id.is_empty() || ids.iter().any(|b| b.as_str() == model_id) {
            return Err(Error::Config(format!("[experiment] model_id {model_id:?} is empty or clashes with a backbone id")));
        }
        for b in &self.experiment.baselines {
            self.experiment.registry.check(b)?;
            if b == model_id || ids.iter().any(|i| i.as_str() == b) {
                return Err(Error::Config(format!("[experiment] baseline id {b:?} clashes with another model id")));
            }
        }
        Ok(())
    }

    /// Replace every seed (split, augmentation, training).
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.augment.seed = seed;
        self.train.seed = seed;
    }

    /// SHA-256 of the canonical form of the whole config.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[dataset]\nid = iciar\nroot = data\n[backbones]\nids = stub_a, stub_b\n";

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = PipelineConfig::parse(MINIMAL, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.dataset.root, PathBuf::from("/cfg/data"));
        assert_eq!(cfg.output_dir, PathBuf::from("/cfg/out"));
        assert_eq!(cfg.backbones.ids, vec![BackboneId::StubA, BackboneId::StubB]);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.experiment.baselines, vec!["decision_tree".to_string()]);
    }

    #[test]
    fn invalid_blocks_rejected() {
        let with = |extra: &str| PipelineConfig::parse(&format!("{MINIMAL}{extra}"), Path::new("."));
        assert!(with("[train]\nbeta1 = 1.5\n").is_err());
        assert!(with("[augment]\nzoom_range = 2\n").is_err());
        assert!(with("[preprocess]\nangle_percentile = 60\n").is_err());
        assert!(with("[experiment]\nbaselines = svm\n").is_err());
        assert!(with("[bogus]\nx = 1\n").is_err());
        assert!(with("[backbones]\nwrong = 1\n").is_err());
    }

    #[test]
    fn seed_override_touches_all_seeds() {
        let mut cfg = PipelineConfig::parse(MINIMAL, Path::new(".")).unwrap();
        let before = cfg.sha256();
        cfg.override_seed(42);
        assert_eq!((cfg.dataset.seed, cfg.augment.seed, cfg.train.seed), (42, 42, 42));
        assert_ne!(cfg.sha256(), before);
    }
}
