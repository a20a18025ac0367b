//! Python bindings: images, stain normalization, min-max scaling,
//! augmentation, feature files, trained models, metrics and full runs.

use std::path::PathBuf;

use histofuse::augment::{augment_one, AugmentConfig};
use histofuse::datasets::{self, BinaryLabel, DatasetId};
use histofuse::experiments::{confusion, metrics as compute_metrics};
use histofuse::features::FeatureMatrix as CoreMatrix;
use histofuse::fusion::{predict_values, train_classifier_on, ClassifierModel, TrainConfig};
use histofuse::image::ImageTensor;
use histofuse::model_io::{load_model, save_model};
use histofuse::pipeline::{self, PipelineConfig};
use histofuse::preprocess::{self, MacenkoParams, MinMaxMode};
use histofuse::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: Error) -> PyErr {
    match e.root() {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn label_of(code: u8) -> PyResult<BinaryLabel> {
    BinaryLabel::from_code(code).map_err(py_err)
}

#[pyclass(name = "Image", from_py_object)]
#[derive(Clone)]
struct PyImage(ImageTensor);

#[pymethods]
impl PyImage {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ImageTensor::load(&path).map(Self).map_err(py_err)
    }

    /// Build from row-major interleaved RGB bytes.
    #[staticmethod]
    fn from_rgb8(height: usize, width: usize, data: Vec<u8>) -> PyResult<Self> {
        ImageTensor::from_rgb8_bytes(height, width, &data).map(Self).map_err(py_err)
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.0.save_png(&path).map_err(py_err)
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    /// Samples as a flat row-major `h * w * 3` list.
    fn values(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}, {:?})", self.0.height(), self.0.width(), self.0.range())
    }
}

#[pyclass(name = "StainModel", from_py_object)]
#[derive(Clone)]
struct PyStainModel(preprocess::StainModel);

#[pymethods]
impl PyStainModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        preprocess::StainModel::load(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(py_err)
    }

    /// 3x2 optical-density matrix, hematoxylin column first.
    #[getter]
    fn stain_matrix(&self) -> [[f64; 2]; 3] {
        self.0.stain_matrix
    }

    #[getter]
    fn max_concentrations(&self) -> [f64; 2] {
        self.0.max_concentrations
    }

    #[getter]
    fn io_intensity(&self) -> f64 {
        self.0.io_intensity
    }
}

#[pyfunction]
#[pyo3(signature = (intensity, io = 240.0))]
fn od_of(intensity: f64, io: f64) -> f64 {
    preprocess::od_of(intensity, io)
}

#[pyfunction]
#[pyo3(signature = (od, io = 240.0))]
fn intensity_of(od: f64, io: f64) -> f64 {
    preprocess::intensity_of(od, io)
}

#[pyfunction]
fn fit_stain_model(image: &PyImage) -> PyResult<PyStainModel> {
    preprocess::fit_stain_model(&image.0, &MacenkoParams::default())
        .map(PyStainModel)
        .map_err(py_err)
}

#[pyfunction]
fn stain_normalize(image: &PyImage, reference: &PyStainModel) -> PyResult<PyImage> {
    preprocess::stain_normalize(&image.0, &reference.0, &MacenkoParams::default())
        .map(PyImage)
        .map_err(py_err)
}

/// Returns `(scaled image, constant_input)`.
#[pyfunction]
#[pyo3(signature = (image, per_channel = false))]
fn minmax_normalize(image: &PyImage, per_channel: bool) -> PyResult<(PyImage, bool)> {
    let mode = if per_channel { MinMaxMode::PerChannel } else { MinMaxMode::Global };
    let out = preprocess::minmax_normalize(&image.0, mode).map_err(py_err)?;
    Ok((PyImage(out.image), out.constant_input))
}

#[pyfunction]
fn minmax_values(values: Vec<f64>) -> (Vec<f64>, bool) {
    preprocess::minmax_values(&values)
}

#[pyfunction]
fn resize_to_model_input(image: &PyImage) -> PyResult<PyImage> {
    preprocess::resize_to_model_input(&image.0).map(PyImage).map_err(py_err)
}

/// Draw `draw_index` of the default augmentation stream for `seed`.
#[pyfunction]
#[pyo3(signature = (image, seed, draw_index, identity = false))]
fn augment(image: &PyImage, seed: u64, draw_index: u64, identity: bool) -> PyResult<PyImage> {
    let base = if identity { AugmentConfig::identity() } else { AugmentConfig::default() };
    let cfg = AugmentConfig { seed, ..base };
    augment_one(&image.0, &cfg, draw_index).map(PyImage).map_err(py_err)
}

/// Scan and split a dataset; returns one dict per record.
#[pyfunction]
#[pyo3(signature = (dataset, root, train_fraction = 0.8, seed = 0))]
fn ingest<'py>(
    py: Python<'py>,
    dataset: &str,
    root: PathBuf,
    train_fraction: f64,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let id: DatasetId = dataset.parse().map_err(py_err)?;
    let manifest = datasets::ingest(id, &root).map_err(py_err)?.manifest;
    let manifest = datasets::split(&manifest, train_fraction, seed).map_err(py_err)?;
    manifest
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("image_path", &r.image_path)?;
            d.set_item("raw_class", r.raw_class.as_str())?;
            d.set_item("label", r.binary_label.code())?;
            d.set_item("patient_id", r.patient_id.clone())?;
            d.set_item("magnification", r.magnification.map(|m| m.as_str()))?;
            d.set_item("split", r.split.map(|s| s.as_str()))?;
            Ok(d)
        })
        .collect()
}

#[pyclass(name = "FeatureMatrix", from_py_object)]
#[derive(Clone)]
struct PyFeatureMatrix(CoreMatrix);

#[pymethods]
impl PyFeatureMatrix {
    #[new]
    fn new(rows: Vec<Vec<f32>>, labels: Vec<u8>) -> PyResult<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("rows differ in length"));
        }
        let labels = labels.into_iter().map(label_of).collect::<PyResult<Vec<_>>>()?;
        CoreMatrix::new(dim, rows.concat(), labels).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        CoreMatrix::load(&path).map(Self).map_err(py_err)
    }

    /// Side-by-side concatenation of matrices over the same samples.
    #[staticmethod]
    fn concat(parts: Vec<PyFeatureMatrix>) -> PyResult<Self> {
        let parts: Vec<CoreMatrix> = parts.into_iter().map(|p| p.0).collect();
        CoreMatrix::concat(&parts).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.0.labels.iter().map(|l| l.code()).collect()
    }

    fn rows(&self) -> Vec<Vec<f32>> {
        (0..self.0.len()).map(|i| self.0.row(i).to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "Classifier")]
struct PyClassifier(ClassifierModel);

#[pymethods]
impl PyClassifier {
    /// Train the fusion head on a feature matrix.
    #[staticmethod]
    #[pyo3(signature = (features, max_epochs = 1000, seed = 0))]
    fn train(features: &PyFeatureMatrix, max_epochs: usize, seed: u64) -> PyResult<Self> {
        let cfg = TrainConfig { max_epochs, seed, ..TrainConfig::default() };
        train_classifier_on(&features.0.rows_f64(), &features.0.labels, &cfg)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_model(&path).map(Self).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&self.0, &path).map_err(py_err)
    }

    /// `(label, [p_benign, p_malignant])` per row.
    fn predict(&self, features: &PyFeatureMatrix) -> PyResult<Vec<(u8, [f64; 2])>> {
        features
            .0
            .rows_f64()
            .iter()
            .map(|row| {
                predict_values(&self.0, row)
                    .map(|p| (p.label.code(), p.probabilities))
                    .map_err(py_err)
            })
            .collect()
    }

    #[getter]
    fn loss_history(&self) -> Vec<f64> {
        self.0.history.loss.clone()
    }

    #[getter]
    fn accuracy_history(&self) -> Vec<f64> {
        self.0.history.accuracy.clone()
    }
}

/// Accuracy, precision, recall and F1 with malignant (1) as positive.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, predictions: Vec<u8>, labels: Vec<u8>) -> PyResult<Bound<'py, PyDict>> {
    let preds = predictions.into_iter().map(label_of).collect::<PyResult<Vec<_>>>()?;
    let labels = labels.into_iter().map(label_of).collect::<PyResult<Vec<_>>>()?;
    let counts = confusion(&preds, &labels).map_err(py_err)?;
    let m = compute_metrics(counts).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("tp", counts.tp)?;
    d.set_item("fp", counts.fp)?;
    d.set_item("tn", counts.tn)?;
    d.set_item("fn", counts.fn_)?;
    d.set_item("accuracy", m.accuracy)?;
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("f1", m.f1)?;
    d.set_item("precision_degenerate", m.precision_degenerate)?;
    d.set_item("recall_degenerate", m.recall_degenerate)?;
    d.set_item("f1_degenerate", m.f1_degenerate)?;
    Ok(d)
}

#[pyfunction]
fn f1_score(precision: f64, recall: f64) -> f64 {
    histofuse::experiments::f1_score(precision, recall)
}

/// Run every stage of a config file and return the report.
#[pyfunction]
#[pyo3(signature = (config, seed = None, output_dir = None))]
fn run_all<'py>(
    py: Python<'py>,
    config: PathBuf,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = PipelineConfig::load(&config).map_err(py_err)?;
    if let Some(seed) = seed {
        cfg.override_seed(seed);
    }
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let summary = py.detach(|| pipeline::run_all(&cfg)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("config_sha256", &summary.config_sha256)?;
    d.set_item(
        "stages",
        summary
            .stages
            .iter()
            .map(|s| (s.stage.clone(), s.status.as_str(), s.key.clone()))
            .collect::<Vec<_>>(),
    )?;
    d.set_item("report_csv", &summary.rendered.csv)?;
    d.set_item("report_table", &summary.rendered.table)?;
    d.set_item("grid", summary.rendered.grid.clone())?;
    d.set_item("report_dir", &summary.report_dir)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "histofuse")]
fn histofuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyStainModel>()?;
    m.add_class::<PyFeatureMatrix>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(od_of, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_of, m)?)?;
    m.add_function(wrap_pyfunction!(fit_stain_model, m)?)?;
    m.add_function(wrap_pyfunction!(stain_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(minmax_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(minmax_values, m)?)?;
    m.add_function(wrap_pyfunction!(resize_to_model_input, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(f1_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    Ok(())
}
