//! `histofuse` command-line interface.
//!
//! Exit codes: 0 success, 1 validation error, 2 stage failure, 3 I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use histofuse::augment::{augment_manifest, AugmentConfig};
use histofuse::backbones::{BackboneDescriptor, BackboneId, FeatureTap, WeightsSource};
use histofuse::datasets::{self, DatasetId, DatasetManifest};
use histofuse::experiments::{collect_runs, confusion, metrics, render_report, ReportRow};
use histofuse::features::FeatureMatrix;
use histofuse::fixture;
use histofuse::fusion::{train_classifier_on, TrainConfig};
use histofuse::model_io::{load_model, save_model};
use histofuse::pipeline::{self, ExtractOptions, PipelineConfig};
use histofuse::preprocess::{MacenkoParams, MinMaxMode, StainModel, TissueFallback};
use histofuse::{Error, Result};

#[derive(Parser)]
#[command(name = "histofuse", version, about = "H&E histology classification with three-backbone feature fusion")]
struct Cli {
    /// Pipeline config file; supplies defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Validate and print the stage plan without running anything.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset tree and write a split manifest.
    Ingest(IngestArgs),
    /// Macenko-normalize and resize every image of a manifest.
    StainNorm(StainNormArgs),
    /// Write augmented copies of the train split.
    Augment(AugmentArgs),
    /// Fine-tune one backbone and extract train/test features.
    Extract(ExtractArgs),
    /// Train the fusion classifier on concatenated feature files.
    Train(TrainArgs),
    /// Predict labels for a feature file.
    Predict(PredictArgs),
    /// Score a model on labelled features and write metrics JSON.
    Evaluate(EvaluateArgs),
    /// Merge metrics JSON files into one comparison report.
    Compare(CompareArgs),
    /// Run the whole pipeline from the config.
    RunAll,
    /// Write a synthetic dataset.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    dataset: Option<DatasetId>,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Manifest CSV to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StainNormArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Reference tile; defaults to the first fittable train image.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Keep the original image size instead of resizing to 224.
    #[arg(long)]
    keep_size: bool,
    /// Output directory (images/, manifest.csv, reference.stain).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    copies: Option<usize>,
    /// Output directory (images/, manifest.csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    backbone: BackboneId,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    tap: Option<FeatureTap>,
    #[arg(long)]
    freeze_body: bool,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    /// Output directory (train.hfv, test.hfv, finetune_history.csv).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Comma-separated feature files over the same samples, fused in order.
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    features: Vec<PathBuf>,
    #[arg(long, default_value = "ensemble")]
    model_id: String,
    #[arg(long)]
    dataset: Option<DatasetId>,
    /// Manifest the features came from; its digest goes into the metrics.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory searched recursively for metrics JSON files.
    #[arg(long)]
    runs: PathBuf,
    /// Report CSV; report.txt and grid.txt go next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    /// H&E-like tiles in the ICIAR four-class layout.
    Iciar,
    /// Channel-texture tiles where each channel carries one label bit.
    Complementary,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, value_enum, default_value = "iciar")]
    kind: FixtureKind,
    /// Images per class folder (iciar) or per bit pattern (complementary).
    #[arg(long, default_value_t = 15)]
    per_class: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Stage { source, .. } => match source.root() {
            Error::Config(_) => 1,
            _ => 2,
        },
        Error::Io { .. } | Error::Image { .. } => 3,
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::UnknownClass { .. }
        | Error::UnknownBaseline { .. }
        | Error::Shape(_)
        | Error::Format { .. }
        | Error::Csv(_) => 1,
        _ => 2,
    }
}

fn init_logging(level: log::LevelFilter) {
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format(|buf, record| {
            let line = serde_json::json!({
                "ts": buf.timestamp_millis().to_string(),
                "level": record.level().as_str(),
                "stage": record.target(),
                "msg": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .init();
}

struct Context {
    config: Option<PipelineConfig>,
    seed: Option<u64>,
    dry_run: bool,
}

impl Context {
    fn macenko(&self) -> MacenkoParams {
        self.config.as_ref().map_or_else(MacenkoParams::default, |c| c.preprocess.macenko)
    }

    fn fallback(&self) -> TissueFallback {
        self.config.as_ref().map_or_else(TissueFallback::default, |c| c.preprocess.tissue_fallback)
    }

    fn minmax(&self) -> MinMaxMode {
        self.config.as_ref().map_or_else(MinMaxMode::default, |c| c.preprocess.minmax)
    }

    fn augment(&self) -> AugmentConfig {
        let mut cfg = self.config.as_ref().map_or_else(AugmentConfig::default, |c| c.augment.clone());
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg
    }

    fn train(&self) -> TrainConfig {
        let mut cfg = self.config.as_ref().map_or_else(TrainConfig::default, |c| c.train);
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg
    }

    /// Print the single-stage plan for `--dry-run`; true when nothing
    /// should run.
    fn plan(&self, stage: &str, detail: &str) -> bool {
        if self.dry_run {
            println!("{stage}: {detail}");
        }
        self.dry_run
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_features(paths: &[PathBuf]) -> Result<FeatureMatrix> {
    let parts = paths
        .iter()
        .map(|p| FeatureMatrix::load(p))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::concat(&parts)
}

fn ingest(ctx: &Context, a: IngestArgs) -> Result<()> {
    let ds = ctx.config.as_ref().map(|c| &c.dataset);
    let dataset = a
        .dataset
        .or(ds.map(|d| d.id))
        .ok_or_else(|| Error::Config("--dataset is required without a config".into()))?;
    let root = a
        .root
        .or(ds.map(|d| d.root.clone()))
        .ok_or_else(|| Error::Config("--root is required without a config".into()))?;
    let fraction = a.train_fraction.or(ds.map(|d| d.train_fraction)).unwrap_or(0.8);
    let seed = ctx.seed.or(ds.map(|d| d.seed)).unwrap_or(0);
    if ctx.plan("ingest", &format!("{dataset} from {} -> {}", root.display(), a.out.display())) {
        return Ok(());
    }
    let ingested = datasets::ingest(dataset, &root)?;
    for (path, why) in &ingested.skipped {
        log::warn!(target: "ingest", "skipped {}: {why}", path.display());
    }
    let mut manifest = ingested.manifest;
    if let Some(mag) = ds.and_then(|d| d.magnification) {
        manifest = manifest.filter_magnification(mag);
    }
    let manifest = datasets::split(&manifest, fraction, seed)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    manifest.save(&a.out)?;
    log::info!(target: "ingest", "{} records written to {}", manifest.len(), a.out.display());
    Ok(())
}

fn stain_norm(ctx: &Context, a: StainNormArgs) -> Result<()> {
    let reference = a
        .reference
        .or_else(|| ctx.config.as_ref().and_then(|c| c.preprocess.reference.clone()));
    if ctx.plan("stain-norm", &format!("{} -> {}", a.manifest.display(), a.out.display())) {
        return Ok(());
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let params = ctx.macenko();
    let model: StainModel = pipeline::reference_stain_model(&manifest, reference.as_deref(), &params)?;
    mkdir(&a.out)?;
    model.save(&a.out.join("reference.stain"))?;
    let set = pipeline::preprocess_manifest(
        &manifest,
        Some(&model),
        &params,
        ctx.fallback(),
        !a.keep_size,
        &a.out.join("images"),
    )?;
    set.manifest.save(&a.out.join("manifest.csv"))
}

fn augment(ctx: &Context, a: AugmentArgs) -> Result<()> {
    let mut cfg = ctx.augment();
    if let Some(c) = a.copies {
        cfg.copies_per_image = c;
    }
    cfg.validate()?;
    if ctx.plan("augment", &format!("{} copies per train image -> {}", cfg.copies_per_image, a.out.display())) {
        return Ok(());
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let images = a.out.join("images");
    mkdir(&images)?;
    augment_manifest(&manifest, &cfg, &images)?.save(&a.out.join("manifest.csv"))
}

fn extract(ctx: &Context, a: ExtractArgs) -> Result<()> {
    let bb = ctx.config.as_ref().map(|c| &c.backbones);
    let weights = match a.weights {
        Some(p) => WeightsSource::File(p),
        None => bb.map_or_else(
            || if a.backbone.is_stub() { WeightsSource::None } else { WeightsSource::Imagenet },
            |b| b.weights_source(a.backbone),
        ),
    };
    let opts = ExtractOptions {
        descriptor: BackboneDescriptor::new(a.backbone, weights),
        tap: a.tap.or(bb.map(|b| b.tap)).unwrap_or_default(),
        freeze_body: a.freeze_body || bb.is_some_and(|b| b.freeze_body),
        finetune_epochs: a.finetune_epochs.or(bb.map(|b| b.finetune_epochs)).unwrap_or(20),
        minmax: ctx.minmax(),
    };
    let train = ctx.train();
    train.validate()?;
    if ctx.plan(
        &format!("extract:{}", a.backbone),
        &format!("tap {}, {} fine-tune epochs -> {}", opts.tap, opts.finetune_epochs, a.out.display()),
    ) {
        return Ok(());
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let ex = pipeline::extract_manifest(&manifest, &opts, &train)?;
    mkdir(&a.out)?;
    ex.train.save(&a.out.join("train.hfv"))?;
    ex.test.save(&a.out.join("test.hfv"))?;
    write_file(&a.out.join("finetune_history.csv"), pipeline::history_text(&ex.history))
}

fn train(ctx: &Context, a: TrainArgs) -> Result<()> {
    let mut cfg = ctx.train();
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    cfg.validate()?;
    if ctx.plan("train", &format!("{} feature file(s), {} epochs -> {}", a.features.len(), cfg.max_epochs, a.out.display())) {
        return Ok(());
    }
    let features = load_features(&a.features)?;
    let model = train_classifier_on(&features.rows_f64(), &features.labels, &cfg)?;
    if let (Some(loss), Some(acc)) = (model.history.loss.last(), model.history.accuracy.last()) {
        log::info!(target: "train", "final loss {loss:.6}, train accuracy {acc:.4}");
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    save_model(&model, &a.out)
}

fn predict(ctx: &Context, a: PredictArgs) -> Result<()> {
    if ctx.plan("predict", &format!("{} -> {}", a.model.display(), a.out.display())) {
        return Ok(());
    }
    let model = load_model(&a.model)?;
    let features = load_features(&a.features)?;
    let preds = pipeline::predict_matrix(&model, &features)?;
    write_file(&a.out, pipeline::predictions_csv(&preds))
}

fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<()> {
    let dataset = a
        .dataset
        .or(ctx.config.as_ref().map(|c| c.dataset.id))
        .ok_or_else(|| Error::Config("--dataset is required without a config".into()))?;
    if ctx.plan("evaluate", &format!("{} on {dataset} -> {}", a.model_id, a.out.display())) {
        return Ok(());
    }
    let model = load_model(&a.model)?;
    let features = load_features(&a.features)?;
    let preds: Vec<_> = pipeline::predict_matrix(&model, &features)?
        .into_iter()
        .map(|p| p.0)
        .collect();
    let manifest_sha256 = match &a.manifest {
        Some(p) => {
            let root = ctx.config.as_ref().map_or_else(PathBuf::new, |c| c.dataset.root.clone());
            pipeline::manifest_digest(&DatasetManifest::load(p)?, &root)?
        }
        None => String::new(),
    };
    let row = ReportRow {
        model_id: a.model_id,
        dataset_id: dataset.as_str().to_string(),
        metrics: metrics(confusion(&preds, &features.labels)?)?,
        manifest_sha256,
        seed: model.config.seed,
    };
    let [acc, p, r, f1] = row.metrics.pct_strings();
    println!("accuracy {acc}%  precision {p}%  recall {r}%  f1 {f1}%");
    write_file(&a.out, row.to_json())
}

fn compare(ctx: &Context, a: CompareArgs) -> Result<()> {
    if ctx.plan("compare", &format!("{} -> {}", a.runs.display(), a.out.display())) {
        return Ok(());
    }
    let rendered = render_report(&collect_runs(&a.runs)?)?;
    write_file(&a.out, &rendered.csv)?;
    let dir = a.out.parent().unwrap_or(Path::new("."));
    write_file(&dir.join("report.txt"), &rendered.table)?;
    if let Some(grid) = &rendered.grid {
        write_file(&dir.join("grid.txt"), grid)?;
    }
    print!("{}", rendered.table);
    Ok(())
}

fn run_all(ctx: &Context) -> Result<()> {
    let cfg = ctx
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("run-all needs --config".into()))?;
    if ctx.dry_run {
        println!("config sha256 {}", cfg.sha256());
        for stage in pipeline::stage_plan(cfg) {
            if stage.depends_on.is_empty() {
                println!("{}", stage.name);
            } else {
                println!("{} <- {}", stage.name, stage.depends_on.join(", "));
            }
        }
        return Ok(());
    }
    let summary = pipeline::run_all(cfg)?;
    for s in &summary.stages {
        println!("{}: {} ({})", s.stage, s.status.as_str(), &s.key[..16]);
    }
    print!("{}", summary.rendered.table);
    if let Some(grid) = &summary.rendered.grid {
        print!("{grid}");
    }
    println!("report: {}", summary.report_dir.display());
    Ok(())
}

fn make_fixture(ctx: &Context, a: FixtureArgs) -> Result<()> {
    if a.size < 8 || a.per_class == 0 {
        return Err(Error::InvalidInput("fixture needs --size >= 8 and --per-class >= 1".into()));
    }
    if ctx.plan("fixture", &a.out.display().to_string()) {
        return Ok(());
    }
    let seed = ctx.seed.unwrap_or(0);
    match a.kind {
        FixtureKind::Iciar => fixture::write_iciar_fixture(&a.out, a.per_class, a.size, seed),
        FixtureKind::Complementary => fixture::write_complementary_fixture(&a.out, a.per_class, a.size, seed),
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => {
            let mut cfg = PipelineConfig::load(path)?;
            if let Some(seed) = cli.seed {
                cfg.override_seed(seed);
            }
            Some(cfg)
        }
        None => None,
    };
    let ctx = Context {
        config,
        seed: cli.seed,
        dry_run: cli.dry_run,
    };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, a),
        Command::StainNorm(a) => stain_norm(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Compare(a) => compare(&ctx, a),
        Command::RunAll => run_all(&ctx),
        Command::Fixture(a) => make_fixture(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.log_level);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            log::error!(target: "cli", "{e}");
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}
