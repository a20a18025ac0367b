//! Content-addressed stage directories.
//!
//! A stage with key `k` lives in `<root>/<stage>/<k[..16]>/`. The directory
//! is complete once its `.complete` marker exists; the marker holds the
//! SHA-256 over the stage's output files.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const COMPLETE_MARKER: &str = ".complete";

/// Incremental SHA-256 key builder.
#[derive(Clone, Default)]
pub struct KeyBuilder(Sha256);

impl KeyBuilder {
    pub fn new(stage: &str) -> Self {
        let mut k = Self::default();
        k.field("stage", stage);
        k
    }

    pub fn field(&mut self, name: &str, value: impl AsRef<[u8]>) -> &mut Self {
        let v = value.as_ref();
        self.0.update((name.len() as u64).to_le_bytes());
        self.0.update(name.as_bytes());
        self.0.update((v.len() as u64).to_le_bytes());
        self.0.update(v);
        self
    }

    pub fn finish(&self) -> String {
        hex::encode(self.0.clone().finalize())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn walk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::io(dir, e.into()))?;
        if entry.file_type().is_file() && entry.file_name() != COMPLETE_MARKER {
            files.push(entry.path().to_path_buf());
        }
    }
    Ok(files)
}

/// Hash of every file under `dir` (relative path and bytes), in name order.
pub fn hash_dir(dir: &Path) -> Result<String> {
    let mut key = KeyBuilder::default();
    for path in walk_files(dir)? {
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        key.field(&rel.to_string_lossy(), &bytes);
    }
    Ok(key.finish())
}

/// Cheap fingerprint of an input tree: relative paths, sizes and
/// modification times.
pub fn fingerprint_tree(root: &Path) -> Result<String> {
    let mut key = KeyBuilder::default();
    for path in walk_files(root)? {
        let meta = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?;
        let modified = meta
            .modified()
            .ok()
            .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
            .map_or(0, |d| d.as_nanos());
        let rel = path.strip_prefix(root).unwrap_or(&path);
        key.field(&rel.to_string_lossy(), format!("{}:{modified}", meta.len()));
    }
    Ok(key.finish())
}

pub fn fingerprint_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Cached,
}

impl StageStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: String,
    pub key: String,
    pub status: StageStatus,
    pub output_hash: String,
    pub dir: PathBuf,
}

/// Run `body` into the stage directory unless a complete one exists.
pub fn run_cached(
    root: &Path,
    stage: &str,
    key: &str,
    body: impl FnOnce(&Path) -> Result<()>,
) -> Result<StageOutcome> {
    let dir = root.join(stage.replace(':', "_")).join(&key[..16]);
    let marker = dir.join(COMPLETE_MARKER);
    if let Ok(hash) = std::fs::read_to_string(&marker) {
        log::info!(target: "pipeline", "{stage}: cached ({})", &key[..16]);
        return Ok(StageOutcome {
            stage: stage.to_string(),
            key: key.to_string(),
            status: StageStatus::Cached,
            output_hash: hash.trim().to_string(),
            dir,
        });
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    log::info!(target: "pipeline", "{stage}: running ({})", &key[..16]);
    body(&dir).map_err(|e| e.in_stage(stage))?;
    let output_hash = hash_dir(&dir)?;
    std::fs::write(&marker, format!("{output_hash}\n")).map_err(|e| Error::io(&marker, e))?;
    Ok(StageOutcome {
        stage: stage.to_string(),
        key: key.to_string(),
        status: StageStatus::Ran,
        output_hash,
        dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_field_delimited() {
        let a = KeyBuilder::new("s").field("a", "bc").finish();
        let b = KeyBuilder::new("s").field("ab", "c").finish();
        assert_ne!(a, b);
        assert_eq!(a, KeyBuilder::new("s").field("a", "bc").finish());
    }

    #[test]
    fn second_run_is_cached_with_same_hash() {
        let tmp = tempfile::tempdir().unwrap();
        let key = "0123456789abcdef0123";
        let mut calls = 0;
        let mut run = || {
            run_cached(tmp.path(), "demo", key, |d| {
                calls += 1;
                std::fs::write(d.join("out.txt"), "x").map_err(|e| Error::io(d, e))
            })
            .unwrap()
        };
        let first = run();
        let second = run();
        assert_eq!(first.status, StageStatus::Ran);
        assert_eq!(second.status, StageStatus::Cached);
        assert_eq!(first.output_hash, second.output_hash);
        assert_eq!(first.output_hash, hash_dir(&first.dir).unwrap());
        assert_eq!(calls, 1);
    }

    #[test]
    fn failed_stage_leaves_no_marker() {
        let tmp = tempfile::tempdir().unwrap();
        let err = run_cached(tmp.path(), "bad", "ffffffffffffffffff", |_| Err(Error::Config("boom".into())))
            .unwrap_err();
        assert!(matches!(err, Error::Stage { ref stage, .. } if stage == "bad"));
        assert!(!tmp.path().join("bad/ffffffffffffffff").join(COMPLETE_MARKER).exists());
    }
}
