//! Dataset ingestion, binary label grouping, reproducible splits and the
//! manifest CSV.
//!
//! Supported layouts under `root`:
//!
//! | dataset      | layout                                                            |
//! |--------------|-------------------------------------------------------------------|
//! | `iciar`      | `root/{Normal,Benign,InSitu,Invasive}/*`                          |
//! | `bioimaging` | same as `iciar`, or `root/{train,test}/{Normal,...}/*`            |
//! | `pcam`       | `root/{benign,malignant}/*`                                       |
//! | `breakhis`   | any depth below `root`, files named `SOB_<B|M>_<sub>-<patient>-<mag>-<seq>.png` |
//!
//! Image files are recognized by extension: png, tif, tiff.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "tif", "tiff"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DatasetId {
    BreakHis,
    Iciar,
    Bioimaging,
    Pcam,
}

/// Which closed set of raw class names a dataset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFamily {
    /// `{benign, malignant}`
    Binary,
    /// `{normal, benign, insitu, invasive}`
    FourClass,
}

impl DatasetId {
    pub const ALL: [DatasetId; 4] = [
        DatasetId::BreakHis,
        DatasetId::Iciar,
        DatasetId::Bioimaging,
        DatasetId::Pcam,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::BreakHis => "breakhis",
            DatasetId::Iciar => "iciar",
            DatasetId::Bioimaging => "bioimaging",
            DatasetId::Pcam => "pcam",
        }
    }

    pub fn family(self) -> ClassFamily {
        match self {
            DatasetId::BreakHis | DatasetId::Pcam => ClassFamily::Binary,
            DatasetId::Iciar | DatasetId::Bioimaging => ClassFamily::FourClass,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        DatasetId::ALL
            .into_iter()
            .find(|d| d.as_str() == lower)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown dataset {s:?}; expected one of breakhis, iciar, bioimaging, pcam"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RawClassLabel {
    Normal,
    Benign,
    InSitu,
    Invasive,
    Malignant,
}

impl RawClassLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RawClassLabel::Normal => "normal",
            RawClassLabel::Benign => "benign",
            RawClassLabel::InSitu => "insitu",
            RawClassLabel::Invasive => "invasive",
            RawClassLabel::Malignant => "malignant",
        }
    }

    pub fn allowed(family: ClassFamily) -> &'static [RawClassLabel] {
        match family {
            ClassFamily::Binary => &[RawClassLabel::Benign, RawClassLabel::Malignant],
            ClassFamily::FourClass => &[
                RawClassLabel::Normal,
                RawClassLabel::Benign,
                RawClassLabel::InSitu,
                RawClassLabel::Invasive,
            ],
        }
    }

    /// Case-insensitive; `_`, `-` and spaces are ignored so folder names such
    /// as `InSitu` or `in_situ` both parse.
    pub fn parse(name: &str, family: ClassFamily) -> Result<Self> {
        let key: String = name
            .chars()
            .filter(|c| !matches!(c, '_' | '-' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        let allowed = Self::allowed(family);
        allowed
            .iter()
            .copied()
            .find(|c| c.as_str() == key)
            .ok_or_else(|| Error::UnknownClass {
                name: name.to_string(),
                allowed: allowed
                    .iter()
                    .map(|c| c.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }
}

impl fmt::Display for RawClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryLabel {
    Benign = 0,
    Malignant = 1,
}

impl BinaryLabel {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(BinaryLabel::Benign),
            1 => Ok(BinaryLabel::Malignant),
            other => Err(Error::InvalidInput(format!("binary label code {other} not in {{0, 1}}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Benign => "benign",
            BinaryLabel::Malignant => "malignant",
        }
    }
}

/// Normal and benign group to benign; in situ and invasive group to
/// malignant. Binary-native names map to themselves.
pub fn map_to_binary(raw: RawClassLabel) -> BinaryLabel {
    match raw {
        RawClassLabel::Normal | RawClassLabel::Benign => BinaryLabel::Benign,
        RawClassLabel::InSitu | RawClassLabel::Invasive | RawClassLabel::Malignant => {
            BinaryLabel::Malignant
        }
    }
}

/// Parse a class name for `dataset` and group it.
pub fn map_name_to_binary(name: &str, dataset: DatasetId) -> Result<BinaryLabel> {
    RawClassLabel::parse(name, dataset.family()).map(map_to_binary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Magnification {
    X40,
    X100,
    X200,
    X400,
}

impl Magnification {
    pub fn as_str(self) -> &'static str {
        match self {
            Magnification::X40 => "x40",
            Magnification::X100 => "x100",
            Magnification::X200 => "x200",
            Magnification::X400 => "x400",
        }
    }
}

impl FromStr for Magnification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches(['x', 'X']) {
            "40" => Ok(Magnification::X40),
            "100" => Ok(Magnification::X100),
            "200" => Ok(Magnification::X200),
            "400" => Ok(Magnification::X400),
            _ => Err(Error::InvalidInput(format!(
                "unknown magnification {s:?}; expected x40, x100, x200 or x400"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidInput(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub image_path: PathBuf,
    pub dataset_id: DatasetId,
    pub raw_class: RawClassLabel,
    pub binary_label: BinaryLabel,
    pub patient_id: Option<String>,
    pub magnification: Option<Magnification>,
    /// `None` until the manifest has been split.
    pub split: Option<Split>,
}

impl SampleRecord {
    pub fn new(
        image_path: PathBuf,
        dataset_id: DatasetId,
        raw_class: RawClassLabel,
        patient_id: Option<String>,
        magnification: Option<Magnification>,
    ) -> Result<Self> {
        let record = Self {
            image_path,
            dataset_id,
            raw_class,
            binary_label: map_to_binary(raw_class),
            patient_id,
            magnification,
            split: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_path.as_os_str().is_empty() {
            return Err(Error::InvalidInput("empty image_path".into()));
        }
        if !RawClassLabel::allowed(self.dataset_id.family()).contains(&self.raw_class) {
            return Err(Error::InvalidInput(format!(
                "class {} is not valid for dataset {}",
                self.raw_class, self.dataset_id
            )));
        }
        if map_to_binary(self.raw_class) != self.binary_label {
            return Err(Error::InvalidInput(format!(
                "{}: binary label {} inconsistent with class {}",
                self.image_path.display(),
                self.binary_label.as_str(),
                self.raw_class
            )));
        }
        let is_breakhis = self.dataset_id == DatasetId::BreakHis;
        if self.magnification.is_some() != is_breakhis {
            return Err(Error::InvalidInput(format!(
                "{}: magnification must be present exactly for breakhis records",
                self.image_path.display()
            )));
        }
        Ok(())
    }

    /// Unit that must stay on one side of a split.
    fn group_key(&self) -> String {
        match (&self.dataset_id, &self.patient_id) {
            (DatasetId::BreakHis, Some(p)) => format!("patient:{p}"),
            _ => format!("image:{}", self.image_path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
    /// Seed of the last split, if any.
    pub seed: Option<u64>,
}

impl DatasetManifest {
    pub fn new(mut records: Vec<SampleRecord>) -> Result<Self> {
        records.sort_by(|a, b| a.image_path.cmp(&b.image_path));
        let manifest = Self {
            records,
            seed: None,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert(&r.image_path) {
                return Err(Error::InvalidInput(format!(
                    "duplicate image_path {}",
                    r.image_path.display()
                )));
            }
        }
        if self.records.iter().any(|r| r.split.is_some()) {
            let train_labels: BTreeSet<_> = self
                .in_split(Split::Train)
                .map(|r| r.binary_label)
                .collect();
            if train_labels.len() != 2 {
                return Err(Error::InvalidInput(
                    "train split must contain both binary classes".into(),
                ));
            }
            let patients = |s: Split| -> BTreeSet<&str> {
                self.in_split(s)
                    .filter(|r| r.dataset_id == DatasetId::BreakHis)
                    .filter_map(|r| r.patient_id.as_deref())
                    .collect()
            };
            if let Some(p) = patients(Split::Train).intersection(&patients(Split::Test)).next() {
                return Err(Error::InvalidInput(format!(
                    "patient {p} appears in both train and test"
                )));
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SampleRecord> + '_ {
        self.records.iter().filter(move |r| r.split == Some(split))
    }

    pub fn count(&self, split: Split, label: BinaryLabel) -> usize {
        self.in_split(split).filter(|r| r.binary_label == label).count()
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv writer emits utf-8"))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(MANIFEST_HEADER)?;
        for r in &self.records {
            let path = r.image_path.to_str().ok_or_else(|| {
                Error::InvalidInput(format!("non UTF-8 path {}", r.image_path.display()))
            })?;
            let label = r.binary_label.code().to_string();
            w.write_record([
                path,
                r.dataset_id.as_str(),
                r.raw_class.as_str(),
                label.as_str(),
                r.patient_id.as_deref().unwrap_or(""),
                r.magnification.map(Magnification::as_str).unwrap_or(""),
                r.split.map(Split::as_str).unwrap_or(""),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<manifest>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(MANIFEST_HEADER) {
            return Err(Error::format(
                "manifest",
                format!("header must be {}", MANIFEST_HEADER.join(",")),
            ));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |k: usize| row.get(k).unwrap_or("");
            let opt = |k: usize| Some(field(k)).filter(|s| !s.is_empty());
            let dataset_id: DatasetId = field(1).parse()?;
            let raw_class = RawClassLabel::parse(field(2), dataset_id.family())?;
            let code: u8 = field(3)
                .parse()
                .map_err(|_| Error::format("manifest", format!("row {}: bad label", i + 1)))?;
            let record = SampleRecord {
                image_path: PathBuf::from(field(0)),
                dataset_id,
                raw_class,
                binary_label: BinaryLabel::from_code(code)?,
                patient_id: opt(4).map(str::to_string),
                magnification: opt(5).map(str::parse).transpose()?,
                split: opt(6).map(str::parse).transpose()?,
            };
            records.push(record);
        }
        let manifest = Self {
            records,
            seed: None,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    /// Keep only BreakHis records at one magnification.
    pub fn filter_magnification(&self, mag: Magnification) -> DatasetManifest {
        DatasetManifest {
            records: self
                .records
                .iter()
                .filter(|r| r.magnification == Some(mag))
                .cloned()
                .collect(),
            seed: self.seed,
        }
    }
}

pub const MANIFEST_HEADER: [&str; 7] = [
    "image_path",
    "dataset_id",
    "raw_class",
    "binary_label",
    "patient_id",
    "magnification",
    "split",
];

#[derive(Debug, Clone)]
pub struct Ingested {
    pub manifest: DatasetManifest,
    /// Files that looked like images but could not be parsed, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

/// Scan `root` using the layout of `dataset`.
pub fn ingest(dataset: DatasetId, root: &Path) -> Result<Ingested> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let (records, skipped) = match dataset {
        DatasetId::BreakHis => ingest_breakhis(root)?,
        DatasetId::Bioimaging => {
            let train = root.join("train");
            let test = root.join("test");
            if train.is_dir() && test.is_dir() {
                let mut records = ingest_class_folders(dataset, &train, Some(Split::Train))?;
                records.extend(ingest_class_folders(dataset, &test, Some(Split::Test))?);
                (records, Vec::new())
            } else {
                (ingest_class_folders(dataset, root, None)?, Vec::new())
            }
        }
        DatasetId::Iciar | DatasetId::Pcam => {
            (ingest_class_folders(dataset, root, None)?, Vec::new())
        }
    };
    for (path, reason) in &skipped {
        log::warn!(target: "ingest", "skipping {}: {reason}", path.display());
    }
    if records.is_empty() {
        return Err(Error::NoSamples(root.to_path_buf()));
    }
    if !skipped.is_empty() {
        log::warn!(target: "ingest", "{} file(s) skipped", skipped.len());
    }
    Ok(Ingested {
        manifest: DatasetManifest::new(records)?,
        skipped,
    })
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// `dir/<class>/*.{png,tif,tiff}`; class folders outside the dataset's
/// closed set are rejected.
fn ingest_class_folders(
    dataset: DatasetId,
    dir: &Path,
    split: Option<Split>,
) -> Result<Vec<SampleRecord>> {
    let class_dirs: Vec<PathBuf> = read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| p.is_dir())
        .collect();
    let per_class: Vec<Vec<SampleRecord>> = class_dirs
        .par_iter()
        .map(|class_dir| {
            let name = class_dir
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            let raw = RawClassLabel::parse(name, dataset.family())?;
            read_dir_sorted(class_dir)?
                .into_iter()
                .filter(|p| p.is_file() && is_image(p))
                .map(|p| {
                    let mut r = SampleRecord::new(p, dataset, raw, None, None)?;
                    r.split = split;
                    Ok(r)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_class.into_iter().flatten().collect())
}

/// Parsed fields of an official BreakHis file name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreakHisName {
    pub class: RawClassLabel,
    pub subtype: String,
    pub patient_id: String,
    pub magnification: Magnification,
    pub sequence: u32,
}

/// `SOB_B_A-14-22549AB-40-001.png` → benign, subtype A, patient `14-22549AB`,
/// x40, sequence 1.
pub fn parse_breakhis_name(file_name: &str) -> std::result::Result<BreakHisName, String> {
    let stem = file_name
        .rsplit_once('.')
        .map(|(s, _)| s)
        .unwrap_or(file_name);
    let rest = stem
        .strip_prefix("SOB_")
        .ok_or_else(|| "missing SOB_ prefix".to_string())?;
    let (kind, rest) = rest
        .split_once('_')
        .ok_or_else(|| "missing tumor type".to_string())?;
    let class = match kind {
        "B" => RawClassLabel::Benign,
        "M" => RawClassLabel::Malignant,
        other => return Err(format!("tumor type {other:?} is not B or M")),
    };
    let parts: Vec<&str> = rest.split('-').collect();
    if parts.len() < 4 {
        return Err("expected <subtype>-<patient>-<magnification>-<seq>".into());
    }
    let subtype = parts[0];
    let seq = parts[parts.len() - 1];
    let mag = parts[parts.len() - 2];
    let patient = parts[1..parts.len() - 2].join("-");
    if subtype.is_empty() || patient.is_empty() {
        return Err("empty subtype or patient".into());
    }
    let magnification: Magnification = mag.parse().map_err(|e: Error| e.to_string())?;
    let sequence = seq
        .parse()
        .map_err(|_| format!("sequence {seq:?} is not a number"))?;
    Ok(BreakHisName {
        class,
        subtype: subtype.to_string(),
        patient_id: patient,
        magnification,
        sequence,
    })
}

fn ingest_breakhis(root: &Path) -> Result<(Vec<SampleRecord>, Vec<(PathBuf, String)>)> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || !is_image(path) {
            continue;
        }
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        match parse_breakhis_name(name) {
            Ok(parsed) => records.push(SampleRecord::new(
                path.to_path_buf(),
                DatasetId::BreakHis,
                parsed.class,
                Some(parsed.patient_id),
                Some(parsed.magnification),
            )?),
            Err(reason) => skipped.push((path.to_path_buf(), reason)),
        }
    }
    Ok((records, skipped))
}

/// Stratified split by binary label. BreakHis records are grouped by
/// patient so that a patient never straddles the split. Records that already
/// carry a split on every row (Bioimaging published folders) keep it.
///
/// The assignment depends only on the set of records and the seed, not on
/// their order.
pub fn split(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction {train_fraction} must lie in (0, 1)"
        )));
    }
    let mut records = manifest.records.clone();
    records.sort_by(|a, b| a.image_path.cmp(&b.image_path));

    let preassigned = records.iter().all(|r| r.split.is_some())
        && records.iter().all(|r| r.dataset_id == DatasetId::Bioimaging);
    if preassigned {
        let out = DatasetManifest {
            records,
            seed: Some(seed),
        };
        out.validate()?;
        return Ok(out);
    }

    // group key -> label, per class
    let mut groups: BTreeMap<String, BinaryLabel> = BTreeMap::new();
    for r in &records {
        let key = r.group_key();
        match groups.get(&key) {
            Some(&label) if label != r.binary_label => {
                return Err(Error::CannotStratify(format!(
                    "group {key} mixes benign and malignant records"
                )))
            }
            _ => {
                groups.insert(key, r.binary_label);
            }
        }
    }

    let mut train_groups = HashSet::new();
    for label in [BinaryLabel::Benign, BinaryLabel::Malignant] {
        let mut keys: Vec<&String> = groups
            .iter()
            .filter(|(_, &l)| l == label)
            .map(|(k, _)| k)
            .collect();
        if keys.len() < 2 {
            return Err(Error::CannotStratify(format!(
                "class {} has {} group(s), need at least 2",
                label.as_str(),
                keys.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label.code() as u64);
        keys.shuffle(&mut rng);
        let n_train = ((keys.len() as f64 * train_fraction).round() as usize).clamp(1, keys.len() - 1);
        train_groups.extend(keys[..n_train].iter().map(|k| k.to_string()));
    }

    for r in &mut records {
        r.split = Some(if train_groups.contains(&r.group_key()) {
            Split::Train
        } else {
            Split::Test
        });
    }
    let out = DatasetManifest {
        records,
        seed: Some(seed),
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(path: &str, raw: RawClassLabel) -> SampleRecord {
        SampleRecord::new(PathBuf::from(path), DatasetId::Iciar, raw, None, None).unwrap()
    }

    #[test]
    fn grouping_rule() {
        assert_eq!(map_to_binary(RawClassLabel::InSitu), BinaryLabel::Malignant);
        assert_eq!(map_to_binary(RawClassLabel::Invasive), BinaryLabel::Malignant);
        assert_eq!(map_to_binary(RawClassLabel::Benign), BinaryLabel::Benign);
        assert_eq!(map_to_binary(RawClassLabel::Normal), BinaryLabel::Benign);
        assert_eq!(map_to_binary(RawClassLabel::Malignant), BinaryLabel::Malignant);
    }

    #[test]
    fn class_parsing_is_case_insensitive_and_closed() {
        let four = ClassFamily::FourClass;
        assert_eq!(RawClassLabel::parse("InSitu", four).unwrap(), RawClassLabel::InSitu);
        assert_eq!(RawClassLabel::parse("in_situ", four).unwrap(), RawClassLabel::InSitu);
        assert_eq!(RawClassLabel::parse("NORMAL", four).unwrap(), RawClassLabel::Normal);
        let err = RawClassLabel::parse("malignant", four).unwrap_err().to_string();
        assert!(err.contains("\"malignant\""), "{err}");
        assert!(err.contains("normal, benign, insitu, invasive"), "{err}");
        assert!(RawClassLabel::parse("normal", ClassFamily::Binary).is_err());
    }

    #[test]
    fn breakhis_names() {
        let n = parse_breakhis_name("SOB_M_DC-14-2523-400-012.png").unwrap();
        assert_eq!(n.class, RawClassLabel::Malignant);
        assert_eq!(n.subtype, "DC");
        assert_eq!(n.patient_id, "14-2523");
        assert_eq!(n.magnification, Magnification::X400);
        assert_eq!(n.sequence, 12);
        assert!(parse_breakhis_name("SOB_X_A-14-1-40-001.png").is_err());
        assert!(parse_breakhis_name("SOB_B_A-14-1-50-001.png").is_err());
        assert!(parse_breakhis_name("slide.png").is_err());
    }

    #[test]
    fn magnification_only_for_breakhis() {
        let bad = SampleRecord::new(
            PathBuf::from("a.png"),
            DatasetId::Iciar,
            RawClassLabel::Normal,
            None,
            Some(Magnification::X40),
        );
        assert!(bad.is_err());
        let bad = SampleRecord::new(
            PathBuf::from("a.png"),
            DatasetId::BreakHis,
            RawClassLabel::Benign,
            Some("p".into()),
            None,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn duplicate_paths_rejected() {
        let r = rec("a.png", RawClassLabel::Normal);
        assert!(DatasetManifest::new(vec![r.clone(), r]).is_err());
    }

    #[test]
    fn split_rejects_bad_fraction_and_tiny_classes() {
        let m = DatasetManifest::new(vec![
            rec("a.png", RawClassLabel::Normal),
            rec("b.png", RawClassLabel::Benign),
            rec("c.png", RawClassLabel::Invasive),
        ])
        .unwrap();
        for f in [0.0, 1.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(split(&m, f, 1), Err(Error::InvalidInput(_))));
        }
        assert!(matches!(split(&m, 0.5, 1), Err(Error::CannotStratify(_))));
    }

    #[test]
    fn csv_round_trip_and_header() {
        let mut m = DatasetManifest::new(vec![
            rec("x/a,b.png", RawClassLabel::Normal),
            rec("x/c.png", RawClassLabel::Invasive),
            rec("x/d.png", RawClassLabel::Benign),
            rec("x/e.png", RawClassLabel::InSitu),
        ])
        .unwrap();
        m = split(&m, 0.5, 3).unwrap();
        let text = m.to_csv_string().unwrap();
        assert!(text.starts_with(
            "image_path,dataset_id,raw_class,binary_label,patient_id,magnification,split\n"
        ));
        assert!(!text.contains('\r'));
        let back = DatasetManifest::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back.records, m.records);
    }
}
