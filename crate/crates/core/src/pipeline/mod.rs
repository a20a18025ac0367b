//! End-to-end orchestration: ingest → preprocess → augment → extract (one
//! stage per backbone, run concurrently) → train → evaluate.
//!
//! Every stage writes into a content-addressed directory under
//! `<output>/stages/`, so unchanged stages are skipped on rerun. Each stage
//! outcome is appended to `<output>/ledger.jsonl`, and the final report is
//! copied to `<output>/report/`.

pub mod cache;
pub mod config;

use std::borrow::Cow;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use cache::{StageOutcome, StageStatus};
pub use config::{BackbonesBlock, DatasetBlock, ExperimentBlock, PipelineConfig, PreprocessBlock};

use crate::augment::augment_manifest;
use crate::backbones::{
    extract_features, fine_tune, load_backbone, replace_head, BackboneDescriptor, BackboneId, FeatureTap,
    FineTuneOptions, ImageSource,
};
use crate::datasets::{self, BinaryLabel, DatasetManifest, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::experiments::{
    baseline_adapter, confusion, metrics, render_report, ComparisonReport, RenderedReport, ReportRow,
};
use crate::features::FeatureMatrix;
use crate::fusion::{fuse, predict_values, train_classifier, ClassifierModel, TrainConfig};
use crate::image::ImageTensor;
use crate::model_io::{load_model, save_model};
use crate::nn::History;
use crate::preprocess::{
    fit_stain_model, minmax_normalize, resize_to_model_input, stain_normalize_or_pass, MacenkoParams, MinMaxMode,
    StainModel, TissueFallback, MODEL_INPUT_SIZE,
};
use cache::{fingerprint_file, fingerprint_tree, run_cached, sha256_hex, KeyBuilder};

/// Images read from disk on demand, brought to model input size and
/// min-max normalized.
pub struct FileImages {
    pub paths: Vec<PathBuf>,
    pub minmax: MinMaxMode,
}

impl FileImages {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a SampleRecord>, minmax: MinMaxMode) -> Self {
        Self {
            paths: records.into_iter().map(|r| r.image_path.clone()).collect(),
            minmax,
        }
    }
}

impl ImageSource for FileImages {
    fn len(&self) -> usize {
        self.paths.len()
    }

    fn load(&self, index: usize) -> Result<Cow<'_, ImageTensor>> {
        let mut img = ImageTensor::load(&self.paths[index])?;
        if img.dims() != (MODEL_INPUT_SIZE, MODEL_INPUT_SIZE) {
            img = resize_to_model_input(&img)?;
        }
        Ok(Cow::Owned(minmax_normalize(&img, self.minmax)?.image))
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Stain model of the configured reference tile, or of the first train
/// image (in manifest order) that can be fitted.
pub fn reference_stain_model(
    manifest: &DatasetManifest,
    reference: Option<&Path>,
    params: &MacenkoParams,
) -> Result<StainModel> {
    if let Some(path) = reference {
        return fit_stain_model(&ImageTensor::load(path)?, params);
    }
    let mut last = None;
    for r in manifest.in_split(Split::Train) {
        match fit_stain_model(&ImageTensor::load(&r.image_path)?, params) {
            Ok(m) => {
                log::info!(target: "preprocess", "reference stain model from {}", r.image_path.display());
                return Ok(m);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::InvalidInput("no train images to fit a reference stain model".into())))
}

pub struct PreprocessedSet {
    pub manifest: DatasetManifest,
    /// Images that were passed through without stain normalization.
    pub passed_through: Vec<PathBuf>,
}

/// Stain-normalize (when `reference` is given) and resize every record,
/// writing `<index>_<stem>.png` files into `out_dir`.
pub fn preprocess_manifest(
    manifest: &DatasetManifest,
    reference: Option<&StainModel>,
    params: &MacenkoParams,
    fallback: TissueFallback,
    resize: bool,
    out_dir: &Path,
) -> Result<PreprocessedSet> {
    mkdir(out_dir)?;
    let results: Vec<(SampleRecord, bool)> = manifest
        .records
        .par_iter()
        .enumerate()
        .map(|(i, record)| {
            let img = ImageTensor::load(&record.image_path)?;
            let (img, passed) = match reference {
                Some(model) => {
                    let n = stain_normalize_or_pass(&img, model, params, fallback)?;
                    (n.image, n.passed_through)
                }
                None => (img.to_uint8_range(), false),
            };
            let img = if resize { resize_to_model_input(&img)? } else { img };
            let stem = record.image_path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            let path = out_dir.join(format!("{i:06}_{stem}.png"));
            img.save_png(&path)?;
            let mut r = record.clone();
            r.image_path = path;
            Ok((r, passed))
        })
        .collect::<Result<_>>()?;
    let passed_through: Vec<PathBuf> = results
        .iter()
        .filter(|(_, p)| *p)
        .map(|(r, _)| r.image_path.clone())
        .collect();
    if !passed_through.is_empty() {
        log::warn!(target: "preprocess", "{} image(s) had too little tissue and were passed through", passed_through.len());
    }
    let out = DatasetManifest {
        records: results.into_iter().map(|(r, _)| r).collect(),
        seed: manifest.seed,
    };
    Ok(PreprocessedSet {
        manifest: out,
        passed_through,
    })
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub descriptor: BackboneDescriptor,
    pub tap: FeatureTap,
    pub freeze_body: bool,
    /// Epochs of head fine-tuning on the train split; 0 skips it.
    pub finetune_epochs: usize,
    pub minmax: MinMaxMode,
}

pub struct Extracted {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub history: History,
}

fn labels_of<'a>(records: impl IntoIterator<Item = &'a SampleRecord>) -> Vec<BinaryLabel> {
    records.into_iter().map(|r| r.binary_label).collect()
}

/// Fine-tune one backbone on the train split and extract features for both
/// splits, in manifest order.
pub fn extract_manifest(manifest: &DatasetManifest, opts: &ExtractOptions, train_cfg: &TrainConfig) -> Result<Extracted> {
    let backbone = replace_head(load_backbone(&opts.descriptor)?, 2, train_cfg.seed)?;
    let train_records: Vec<&SampleRecord> = manifest.in_split(Split::Train).collect();
    let test_records: Vec<&SampleRecord> = manifest.in_split(Split::Test).collect();
    let train_images = FileImages::of(train_records.iter().copied(), opts.minmax);
    let train_labels = labels_of(train_records.iter().copied());
    let (backbone, history) = if opts.finetune_epochs > 0 {
        let cfg = TrainConfig {
            max_epochs: opts.finetune_epochs,
            ..*train_cfg
        };
        fine_tune(
            backbone,
            &train_images,
            &train_labels,
            &cfg,
            FineTuneOptions {
                freeze_body: opts.freeze_body,
            },
        )?
    } else {
        (backbone, History::default())
    };
    let run = |images: &FileImages, labels: Vec<BinaryLabel>| -> Result<FeatureMatrix> {
        let refs: Vec<usize> = (0..images.len()).collect();
        let vectors = extract_features(&backbone, images, &refs, opts.tap)?;
        if vectors.is_empty() {
            let dim = match opts.tap {
                FeatureTap::Head => crate::backbones::HEAD_HIDDEN_UNITS,
                FeatureTap::Pooled => opts.descriptor.feature_dim,
            };
            return FeatureMatrix::new(dim, Vec::new(), Vec::new());
        }
        FeatureMatrix::from_vectors(&vectors, &labels)
    };
    let train = run(&train_images, train_labels)?;
    let test_images = FileImages::of(test_records.iter().copied(), opts.minmax);
    let test = run(&test_images, labels_of(test_records.iter().copied()))?;
    Ok(Extracted { train, test, history })
}

pub fn history_text(h: &History) -> String {
    let mut s = String::from("epoch,loss,accuracy\n");
    for (i, (l, a)) in h.loss.iter().zip(&h.accuracy).enumerate() {
        s.push_str(&format!("{},{l:?},{a:?}\n", i + 1));
    }
    s
}

/// Fuse per-backbone matrices (same rows, same labels) in the given order.
pub fn fuse_matrices(sets: &[(BackboneId, FeatureMatrix)]) -> Result<Vec<crate::fusion::FusedFeature>> {
    let (_, first) = sets
        .first()
        .ok_or_else(|| Error::InvalidInput("no feature sets to fuse".into()))?;
    for (id, m) in sets {
        if m.labels != first.labels {
            return Err(Error::InvalidInput(format!("{id}: labels differ from the first feature set")));
        }
    }
    let vectors: Vec<_> = sets.iter().map(|(id, m)| m.to_vectors(*id)).collect();
    fuse(&vectors, &first.labels)
}

/// Fused rows of `sets` as one matrix.
pub fn fused_matrix(sets: &[(BackboneId, FeatureMatrix)]) -> Result<FeatureMatrix> {
    let fused = fuse_matrices(sets)?;
    let dim = fused.first().map_or(0, |f| f.values.len());
    let labels = fused.iter().map(|f| f.label).collect();
    FeatureMatrix::new(dim, fused.into_iter().flat_map(|f| f.values).collect(), labels)
}

pub fn predict_matrix(model: &ClassifierModel, features: &FeatureMatrix) -> Result<Vec<(BinaryLabel, [f64; 2])>> {
    features
        .rows_f64()
        .iter()
        .map(|r| predict_values(model, r).map(|p| (p.label, p.probabilities)))
        .collect()
}

pub fn predictions_csv(preds: &[(BinaryLabel, [f64; 2])]) -> String {
    let mut s = String::from("index,label,p_benign,p_malignant\n");
    for (i, (l, p)) in preds.iter().enumerate() {
        s.push_str(&format!("{i},{},{:.6},{:.6}\n", l.as_str(), p[0], p[1]));
    }
    s
}

/// SHA-256 of the manifest CSV with image paths relative to `root`, so the
/// digest does not depend on where the dataset lives.
pub fn manifest_digest(manifest: &DatasetManifest, root: &Path) -> Result<String> {
    let mut m = manifest.clone();
    for r in &mut m.records {
        if let Ok(rel) = r.image_path.strip_prefix(root) {
            r.image_path = rel.to_path_buf();
        }
    }
    Ok(sha256_hex(m.to_csv_string()?.as_bytes()))
}

/// Where the run's manifest comes from.
#[derive(Debug, Clone)]
pub enum ManifestSource {
    /// Scan and split `[dataset] root`.
    Ingest,
    /// Use this manifest; records without a split are split with the
    /// configured fraction and seed.
    Given(DatasetManifest),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedStage {
    pub name: String,
    pub depends_on: Vec<String>,
}

/// Stage names in execution order with their inputs.
pub fn stage_plan(cfg: &PipelineConfig) -> Vec<PlannedStage> {
    let stage = |name: &str, deps: &[String]| PlannedStage {
        name: name.to_string(),
        depends_on: deps.to_vec(),
    };
    let extract: Vec<String> = cfg.backbones.ids.iter().map(|id| format!("extract:{id}")).collect();
    let mut plan = vec![
        stage("ingest", &[]),
        stage("preprocess", &["ingest".into()]),
        stage("augment", &["preprocess".into()]),
    ];
    plan.extend(extract.iter().map(|e| stage(e, &["augment".into()])));
    plan.push(stage("train", &extract));
    let mut eval_deps = vec!["train".to_string()];
    eval_deps.extend(extract.iter().cloned());
    plan.push(stage("evaluate", &eval_deps));
    plan
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config_sha256: String,
    pub stages: Vec<StageOutcome>,
    pub report: ComparisonReport,
    pub rendered: RenderedReport,
    pub report_dir: PathBuf,
}

struct Ledger {
    path: PathBuf,
    config_sha256: String,
}

impl Ledger {
    fn record(&self, o: &StageOutcome, seed: u64) -> Result<()> {
        let time = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let line = serde_json::json!({
            "unix_time": time,
            "config_sha256": self.config_sha256,
            "stage": o.stage,
            "status": o.status.as_str(),
            "key": o.key,
            "output_sha256": o.output_hash,
            "seed": seed,
            "dir": o.dir.display().to_string(),
        });
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(&dir.join("manifest.csv"))
}

fn load_sets(extract: &[StageOutcome], ids: &[BackboneId], file: &str) -> Result<Vec<(BackboneId, FeatureMatrix)>> {
    ids.iter()
        .zip(extract)
        .map(|(id, o)| Ok((*id, FeatureMatrix::load(&o.dir.join(file))?)))
        .collect()
}

pub fn run_all(cfg: &PipelineConfig) -> Result<RunSummary> {
    run_pipeline(cfg, ManifestSource::Ingest)
}

pub fn run_pipeline(cfg: &PipelineConfig, source: ManifestSource) -> Result<RunSummary> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    mkdir(out)?;
    let stages_root = out.join("stages");
    let ledger = Ledger {
        path: out.join("ledger.jsonl"),
        config_sha256: cfg.sha256(),
    };
    let mut outcomes = Vec::new();
    let record = |o: StageOutcome, seed: u64, outcomes: &mut Vec<StageOutcome>| -> Result<StageOutcome> {
        ledger.record(&o, seed)?;
        outcomes.push(o.clone());
        Ok(o)
    };

    // ingest
    let ds = &cfg.dataset;
    let ingest_key = {
        let mut k = KeyBuilder::new("ingest");
        k.field("dataset", format!("{ds:?}"));
        match &source {
            ManifestSource::Ingest => {
                k.field("tree", fingerprint_tree(&ds.root).map_err(|e| e.in_stage("ingest"))?);
            }
            ManifestSource::Given(m) => {
                k.field("manifest", m.to_csv_string()?);
            }
        }
        k.finish()
    };
    let ingest = run_cached(&stages_root, "ingest", &ingest_key, |dir| {
        let manifest = match &source {
            ManifestSource::Ingest => {
                let ingested = datasets::ingest(ds.id, &ds.root)?;
                if !ingested.skipped.is_empty() {
                    let lines: Vec<String> = ingested
                        .skipped
                        .iter()
                        .map(|(p, why)| format!("{}\t{why}", p.display()))
                        .collect();
                    write_file(&dir.join("skipped.txt"), lines.join("\n") + "\n")?;
                }
                ingested.manifest
            }
            ManifestSource::Given(m) => m.clone(),
        };
        let manifest = match ds.magnification {
            Some(mag) => manifest.filter_magnification(mag),
            None => manifest,
        };
        let manifest = if manifest.records.iter().all(|r| r.split.is_some()) {
            manifest.validate()?;
            manifest
        } else {
            datasets::split(&manifest, ds.train_fraction, ds.seed)?
        };
        // downstream keys follow this stage's output hash, so it must see
        // image content and not only the manifest
        let mut content = KeyBuilder::new("content");
        for r in &manifest.records {
            let rel = r.image_path.strip_prefix(&ds.root).unwrap_or(&r.image_path);
            content.field(&rel.to_string_lossy(), fingerprint_file(&r.image_path)?);
        }
        write_file(&dir.join("content.sha256"), content.finish() + "\n")?;
        manifest.save(&dir.join("manifest.csv"))
    })?;
    let ingest = record(ingest, ds.seed, &mut outcomes)?;

    // preprocess
    let pp = &cfg.preprocess;
    let key = KeyBuilder::new("preprocess")
        .field("config", format!("{pp:?}"))
        .field(
            "reference",
            match &pp.reference {
                Some(p) => fingerprint_file(p).map_err(|e| e.in_stage("preprocess"))?,
                None => String::new(),
            },
        )
        .field("input", &ingest.output_hash)
        .finish();
    let preprocess = run_cached(&stages_root, "preprocess", &key, |dir| {
        let manifest = load_manifest(&ingest.dir)?;
        let reference = if pp.stain_normalize {
            let model = reference_stain_model(&manifest, pp.reference.as_deref(), &pp.macenko)?;
            model.save(&dir.join("reference.stain"))?;
            Some(model)
        } else {
            None
        };
        let set = preprocess_manifest(
            &manifest,
            reference.as_ref(),
            &pp.macenko,
            pp.tissue_fallback,
            true,
            &dir.join("images"),
        )?;
        let names: Vec<String> = set.passed_through.iter().map(|p| p.display().to_string()).collect();
        write_file(&dir.join("passed_through.txt"), names.join("\n"))?;
        set.manifest.save(&dir.join("manifest.csv"))
    })?;
    let preprocess = record(preprocess, ds.seed, &mut outcomes)?;

    // augment
    let key = KeyBuilder::new("augment")
        .field("config", cfg.augment.to_text())
        .field("input", &preprocess.output_hash)
        .finish();
    let augment = run_cached(&stages_root, "augment", &key, |dir| {
        let manifest = load_manifest(&preprocess.dir)?;
        let images = dir.join("images");
        mkdir(&images)?;
        augment_manifest(&manifest, &cfg.augment, &images)?.save(&dir.join("manifest.csv"))
    })?;
    let augment = record(augment, cfg.augment.seed, &mut outcomes)?;

    // extract, one concurrent stage per backbone
    let bb = &cfg.backbones;
    let extract_jobs: Vec<(BackboneId, String, ExtractOptions)> = bb
        .ids
        .iter()
        .map(|&id| {
            let name = format!("extract:{id}");
            let descriptor = BackboneDescriptor::new(id, bb.weights_source(id));
            let weights = match bb.weights.get(&id) {
                Some(p) => fingerprint_file(p).map_err(|e| e.in_stage(name.as_str()))?,
                None => String::new(),
            };
            let opts = ExtractOptions {
                descriptor,
                tap: bb.tap,
                freeze_body: bb.freeze_body,
                finetune_epochs: bb.finetune_epochs,
                minmax: pp.minmax,
            };
            let key = KeyBuilder::new(&name)
                .field("options", format!("{opts:?}"))
                .field("weights", weights)
                .field("train", format!("{:?}", cfg.train))
                .field("input", &augment.output_hash)
                .finish();
            Ok((id, key, opts))
        })
        .collect::<Result<_>>()?;
    let results: Vec<Result<StageOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = extract_jobs
            .iter()
            .map(|(id, key, opts)| {
                let augment = &augment;
                let stages_root = &stages_root;
                scope.spawn(move || {
                    run_cached(stages_root, &format!("extract:{id}"), key, |dir| {
                        let manifest = load_manifest(&augment.dir)?;
                        let ex = extract_manifest(&manifest, opts, &cfg.train)?;
                        ex.train.save(&dir.join("train.hfv"))?;
                        ex.test.save(&dir.join("test.hfv"))?;
                        write_file(&dir.join("finetune_history.csv"), history_text(&ex.history))
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidInput("extract thread panicked".into()))))
            .collect()
    });
    let mut extract = Vec::new();
    for r in results {
        extract.push(record(r?, cfg.train.seed, &mut outcomes)?);
    }

    // train
    let exp = &cfg.experiment;
    let mut key = KeyBuilder::new("train");
    key.field("train", format!("{:?}", cfg.train))
        .field("model_id", &exp.model_id)
        .field("singles", exp.singles.to_string());
    for e in &extract {
        key.field(&e.stage, &e.output_hash);
    }
    let train = run_cached(&stages_root, "train", &key.finish(), |dir| {
        let sets = load_sets(&extract, &bb.ids, "train.hfv")?;
        let mut jobs: Vec<(String, Vec<(BackboneId, FeatureMatrix)>)> = vec![(exp.model_id.clone(), sets.clone())];
        if exp.singles && sets.len() > 1 {
            jobs.extend(sets.iter().map(|s| (s.0.to_string(), vec![s.clone()])));
        }
        jobs.par_iter()
            .map(|(model_id, sets)| {
                let fused = fuse_matrices(sets)?;
                let model = train_classifier(&fused, &cfg.train)?;
                save_model(&model, &dir.join(format!("{model_id}.hfm")))?;
                write_file(&dir.join(format!("{model_id}_history.csv")), history_text(&model.history))
            })
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    })?;
    let train = record(train, cfg.train.seed, &mut outcomes)?;

    // evaluate
    let manifest = load_manifest(&ingest.dir).map_err(|e| e.in_stage("evaluate"))?;
    let digest = manifest_digest(&manifest, &ds.root)?;
    let mut key = KeyBuilder::new("evaluate");
    key.field("experiment", format!("{exp:?}"))
        .field("dataset", ds.id.as_str())
        .field("manifest", &digest)
        .field("seed", cfg.train.seed.to_string())
        .field("input", &train.output_hash);
    for e in &extract {
        key.field(&e.stage, &e.output_hash);
    }
    let evaluate = run_cached(&stages_root, "evaluate", &key.finish(), |dir| {
        let test_sets = load_sets(&extract, &bb.ids, "test.hfv")?;
        let test_labels = test_sets[0].1.labels.clone();
        if test_labels.is_empty() {
            return Err(Error::InvalidInput("test split is empty".into()));
        }
        let mut models: Vec<(String, Vec<(BackboneId, FeatureMatrix)>)> = vec![(exp.model_id.clone(), test_sets.clone())];
        if exp.singles && test_sets.len() > 1 {
            models.extend(test_sets.iter().map(|s| (s.0.to_string(), vec![s.clone()])));
        }
        let mut report = ComparisonReport::new();
        let mut predictions: Vec<(String, Vec<BinaryLabel>)> = Vec::new();
        for (model_id, sets) in &models {
            let model = load_model(&train.dir.join(format!("{model_id}.hfm")))?;
            let preds = predict_matrix(&model, &fused_matrix(sets)?)?;
            write_file(&dir.join(format!("predictions_{model_id}.csv")), predictions_csv(&preds))?;
            predictions.push((model_id.clone(), preds.into_iter().map(|p| p.0).collect()));
        }
        if !exp.baselines.is_empty() {
            let train_fused = fused_matrix(&load_sets(&extract, &bb.ids, "train.hfv")?)?;
            let test_fused = fused_matrix(&test_sets)?;
            for b in &exp.baselines {
                let preds = baseline_adapter(&exp.registry, b, &train_fused, &test_fused)?;
                predictions.push((b.clone(), preds));
            }
        }
        let metrics_dir = dir.join("metrics");
        mkdir(&metrics_dir)?;
        for (model_id, preds) in predictions {
            let row = ReportRow {
                model_id,
                dataset_id: ds.id.as_str().to_string(),
                metrics: metrics(confusion(&preds, &test_labels)?)?,
                manifest_sha256: digest.clone(),
                seed: cfg.train.seed,
            };
            write_file(&metrics_dir.join(format!("{}.json", row.model_id)), row.to_json())?;
            report.push(row)?;
        }
        render_report(&report)?.write(dir)
    })?;
    let evaluate = record(evaluate, cfg.train.seed, &mut outcomes)?;

    let report = collect_report(&evaluate.dir.join("metrics"), &ensemble_first(cfg))?;
    let rendered = render_report(&report)?;
    let report_dir = out.join("report");
    rendered.write(&report_dir)?;
    let metrics_out = report_dir.join("metrics");
    mkdir(&metrics_out)?;
    for row in report.rows() {
        write_file(&metrics_out.join(format!("{}.json", row.model_id)), row.to_json())?;
    }
    Ok(RunSummary {
        config_sha256: ledger.config_sha256.clone(),
        stages: outcomes,
        report,
        rendered,
        report_dir,
    })
}

/// Model ids in report order: ensemble, singles, baselines.
fn ensemble_first(cfg: &PipelineConfig) -> Vec<String> {
    let mut ids = vec![cfg.experiment.model_id.clone()];
    if cfg.experiment.singles && cfg.backbones.ids.len() > 1 {
        ids.extend(cfg.backbones.ids.iter().map(|b| b.to_string()));
    }
    ids.extend(cfg.experiment.baselines.iter().cloned());
    ids
}

fn collect_report(metrics_dir: &Path, order: &[String]) -> Result<ComparisonReport> {
    let mut report = ComparisonReport::new();
    for id in order {
        let path = metrics_dir.join(format!("{id}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        report.push(ReportRow::from_json(&text)?)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_orders_stages() {
        let cfg = PipelineConfig::parse(
            "[dataset]\nid = pcam\nroot = x\n[backbones]\nids = stub_a,stub_b,stub_c\n",
            Path::new("."),
        )
        .unwrap();
        let names: Vec<String> = stage_plan(&cfg).into_iter().map(|s| s.name).collect();
        assert_eq!(
            names,
            ["ingest", "preprocess", "augment", "extract:stub_a", "extract:stub_b", "extract:stub_c", "train", "evaluate"]
        );
    }

    #[test]
    fn digest_ignores_dataset_location() {
        let rec = |root: &str| {
            SampleRecord::new(
                PathBuf::from(root).join("Benign/a.png"),
                datasets::DatasetId::Iciar,
                datasets::RawClassLabel::Benign,
                None,
                None,
            )
            .unwrap()
        };
        let a = DatasetManifest::new(vec![rec("/x")]).unwrap();
        let b = DatasetManifest::new(vec![rec("/y/z")]).unwrap();
        assert_eq!(
            manifest_digest(&a, Path::new("/x")).unwrap(),
            manifest_digest(&b, Path::new("/y/z")).unwrap()
        );
    }
}
