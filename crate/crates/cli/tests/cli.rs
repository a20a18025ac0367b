use std::path::Path;
use std::process::{Command, Output};

fn histofuse(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histofuse"))
        .current_dir(dir)
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("spawn histofuse")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        stdout(&o),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn small_config(extra_train: &str) -> String {
    format!(
        "[dataset]\nid = iciar\nroot = data\ntrain_fraction = 0.75\nseed = 3\n\
         [preprocess]\nstain_normalize = true\n\
         [augment]\ncopies_per_image = 1\n\
         [backbones]\nids = stub_a, stub_b\nfinetune_epochs = 2\n\
         [train]\nmax_epochs = 20\nseed = 3\n{extra_train}\
         [experiment]\nbaselines = decision_tree\n\
         [output]\ndir = out\n"
    )
}

fn workspace(config: &str) -> tempfile::TempDir {
    let tmp = tempfile::tempdir().unwrap();
    ok(histofuse(tmp.path(), &["fixture", "--per-class", "4", "--size", "32", "--out", "data"]));
    std::fs::write(tmp.path().join("run.conf"), config).unwrap();
    tmp
}

#[test]
fn run_all_then_rerun_hits_cache() {
    let tmp = workspace(&small_config(""));
    let first = stdout(&ok(histofuse(tmp.path(), &["--config", "run.conf", "run-all"])));
    assert!(first.contains("report: "), "{first}");
    assert!(first.contains("ensemble"), "{first}");
    let report = std::fs::read(tmp.path().join("out/report/report.csv")).unwrap();

    let second = stdout(&ok(histofuse(tmp.path(), &["--config", "run.conf", "run-all"])));
    let stage_lines: Vec<&str> = second.lines().filter(|l| l.contains(": ran (") || l.contains(": cached (")).collect();
    assert!(!stage_lines.is_empty(), "{second}");
    assert!(stage_lines.iter().all(|l| l.contains(": cached (")), "{second}");
    assert_eq!(std::fs::read(tmp.path().join("out/report/report.csv")).unwrap(), report);
    assert!(tmp.path().join("out/ledger.jsonl").is_file());
}

#[test]
fn invalid_config_exits_1_before_any_stage() {
    let tmp = workspace(&small_config("beta1 = 1.5\n"));
    let o = histofuse(tmp.path(), &["--config", "run.conf", "run-all"]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta1"));
    assert!(!tmp.path().join("out/stages").exists());
}

#[test]
fn dry_run_prints_plan_without_running() {
    let tmp = workspace(&small_config(""));
    let text = stdout(&ok(histofuse(tmp.path(), &["--config", "run.conf", "--dry-run", "run-all"])));
    assert!(text.starts_with("config sha256 "), "{text}");
    for stage in ["ingest", "preprocess", "augment", "extract:stub_a", "extract:stub_b"] {
        assert!(text.lines().any(|l| l.starts_with(stage)), "missing {stage} in\n{text}");
    }
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn unknown_dataset_root_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = histofuse(tmp.path(), &["ingest", "--dataset", "iciar", "--root", "missing", "--out", "m.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn stage_by_stage_commands_round_trip() {
    let tmp = workspace(&small_config(""));
    let d = tmp.path();
    ok(histofuse(d, &["ingest", "--dataset", "iciar", "--root", "data", "--train-fraction", "0.75", "--out", "manifest.csv"]));
    ok(histofuse(d, &["stain-norm", "--manifest", "manifest.csv", "--out", "norm"]));
    for id in ["stub_a", "stub_b"] {
        ok(histofuse(
            d,
            &["extract", "--manifest", "norm/manifest.csv", "--backbone", id, "--finetune-epochs", "2", "--out", id],
        ));
        assert!(d.join(id).join("train.hfv").is_file());
    }
    ok(histofuse(d, &["train", "--features", "stub_a/train.hfv,stub_b/train.hfv", "--epochs", "20", "--out", "model.hfm"]));
    ok(histofuse(d, &["predict", "--model", "model.hfm", "--features", "stub_a/test.hfv,stub_b/test.hfv", "--out", "pred.csv"]));
    let preds = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    let test_rows = preds.lines().count() - 1;
    assert_eq!(test_rows, 4, "{preds}");

    std::fs::create_dir(d.join("runs")).unwrap();
    let text = stdout(&ok(histofuse(
        d,
        &[
            "evaluate", "--model", "model.hfm", "--features", "stub_a/test.hfv,stub_b/test.hfv", "--dataset", "iciar",
            "--manifest", "norm/manifest.csv", "--out", "runs/ensemble.json",
        ],
    )));
    assert!(text.contains("accuracy"), "{text}");
    ok(histofuse(d, &["train", "--features", "stub_a/train.hfv", "--epochs", "20", "--out", "single.hfm"]));
    ok(histofuse(
        d,
        &[
            "evaluate", "--model", "single.hfm", "--features", "stub_a/test.hfv", "--model-id", "stub_a", "--dataset",
            "iciar", "--manifest", "norm/manifest.csv", "--out", "runs/stub_a.json",
        ],
    ));
    ok(histofuse(d, &["compare", "--runs", "runs", "--out", "report/report.csv"]));
    let report = std::fs::read_to_string(d.join("report/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3, "{report}");
    assert!(d.join("report/grid.txt").is_file());
}
