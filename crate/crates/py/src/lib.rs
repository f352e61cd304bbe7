//! Python module `cmad`: images, configuration, training, scoring,
//! segmentation and the synthetic benchmark.
//!
//! Structured results (reports, benchmark tables, summaries) are returned as
//! plain dicts and lists.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use serde::Serialize;

use ::cmad as core;
use core::data::{read_feature_file, write_feature_file, FeatureMap, Sample, ScalarField};
use core::detector::{build_extractor, PolicyConfig};
use core::eval::{auroc_split, gen_product_dataset, load_dataset, run_benchmark, write_dataset, DefectKind, SceneSpec, SplitSpec};
use core::features::FileExtractor;
use core::model::ComponentModel;

create_exception!(cmad, CmadError, PyException, "Raised for data the pipeline cannot process.");

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        core::Error::Config(_) | core::Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        other => CmadError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// An 8-bit RGB image.
#[pyclass(module = "cmad", name = "Image", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage(core::data::Image);

#[pymethods]
impl PyImage {
    /// From `height * width * 3` bytes in row-major RGB order.
    #[staticmethod]
    fn from_rgb(height: usize, width: usize, data: &[u8]) -> PyResult<Self> {
        core::data::Image::new(height, width, data.to_vec()).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_png(data: &[u8]) -> PyResult<Self> {
        core::data::Image::decode_png(data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        core::data::Image::load_png(path).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save_png(path).map_err(err)
    }

    fn to_png<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.0.encode_png().map_err(err)?))
    }

    fn rgb<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.0.as_raw())
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.0.height(), self.0.width())
    }
}

/// Run configuration; `RunConfig()` gives the defaults.
#[pyclass(module = "cmad", name = "RunConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyRunConfig(core::RunConfig);

#[pymethods]
impl PyRunConfig {
    #[new]
    fn new() -> Self {
        Self(core::RunConfig::default())
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        core::RunConfig::from_toml_str(text).map(Self).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    /// Number of KMeans components.
    #[getter]
    fn k(&self) -> usize {
        self.0.segmentation.k
    }

    #[setter]
    fn set_k(&mut self, k: usize) {
        self.0.segmentation.k = k;
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.0.image.size
    }

    #[setter]
    fn set_image_size(&mut self, size: usize) {
        self.0.image.size = size;
    }

    #[getter]
    fn crf(&self) -> bool {
        self.0.segmentation.crf.enabled
    }

    #[setter]
    fn set_crf(&mut self, enabled: bool) {
        self.0.segmentation.crf.enabled = enabled;
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(err)
    }
}

/// Decision policy: per-component weights and thresholds, a global
/// threshold and counting switches.
#[pyclass(module = "cmad", name = "Policy", skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy(PolicyConfig);

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (weights=None, thresholds=None, global_threshold=None, ignore_background=false, counting_enabled=None))]
    fn new(
        weights: Option<std::collections::BTreeMap<usize, f64>>,
        thresholds: Option<std::collections::BTreeMap<usize, f64>>,
        global_threshold: Option<f64>,
        ignore_background: bool,
        counting_enabled: Option<std::collections::BTreeMap<usize, bool>>,
    ) -> PyResult<Self> {
        let p = PolicyConfig {
            weights: weights.unwrap_or_default(),
            thresholds: thresholds.unwrap_or_default(),
            global_threshold,
            ignore_background,
            counting_enabled: counting_enabled.unwrap_or_default(),
        };
        p.validate().map_err(err)?;
        Ok(Self(p))
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        PolicyConfig::from_toml_str(text).map(Self).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0)
    }
}

fn policy_or_default(policy: Option<&PyPolicy>) -> PolicyConfig {
    policy.map(|p| p.0.clone()).unwrap_or_default()
}

/// A trained component model.
#[pyclass(module = "cmad", name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel(ComponentModel);

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ComponentModel::load(path).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        ComponentModel::from_bytes(data).map(Self).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.to_bytes())
    }

    /// Component ids kept for measurement.
    #[getter]
    fn kept(&self) -> Vec<usize> {
        self.0.kept().to_vec()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.prototypes.k
    }

    /// Calibrated OTSU scale per kept component.
    #[getter]
    fn c_stars(&self) -> Vec<f64> {
        self.0.c_stars()
    }

    #[getter]
    fn default_threshold(&self) -> f64 {
        self.0.default_threshold()
    }

    #[getter]
    fn config(&self) -> PyRunConfig {
        PyRunConfig(self.0.config.clone())
    }

    /// Leave-one-out training scores as `{"ids", "d_g", "d_h"}`.
    fn training_scores<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        d.set_item("ids", self.0.training.ids.clone())?;
        d.set_item("d_g", self.0.training.d_g.clone())?;
        d.set_item("d_h", self.0.training.d_h.clone())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model(k={}, kept={:?})", self.0.prototypes.k, self.0.kept())
    }
}

/// A model paired with its feature extractor.
#[pyclass(module = "cmad", name = "Detector", frozen)]
struct PyDetector(core::detector::Detector);

#[pymethods]
impl PyDetector {
    /// `feature_dir` points file-extractor models at their feature files.
    #[new]
    #[pyo3(signature = (model, feature_dir=None))]
    fn new(model: &PyModel, feature_dir: Option<PathBuf>) -> PyResult<Self> {
        let m = model.0.clone();
        let det = match feature_dir {
            Some(dir) => {
                let stride = m.config.features.stride;
                core::detector::Detector::new(m, Box::new(FileExtractor::new(dir, stride)))
            }
            None => core::detector::Detector::from_model(m).map_err(err)?,
        };
        Ok(Self(det))
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel(self.0.model().clone())
    }

    /// Anomaly report as a dict.
    #[pyo3(signature = (image, id="image", policy=None))]
    fn score<'py>(&self, py: Python<'py>, image: &PyImage, id: &str, policy: Option<&PyPolicy>) -> PyResult<Bound<'py, PyAny>> {
        let sample = Sample::new(id, image.0.clone());
        let policy = policy_or_default(policy);
        let report = py.detach(|| self.0.score(&sample, &policy)).map_err(err)?;
        to_py(py, &report)
    }

    /// Kept-component masks at the input size:
    /// `[{"component", "area", "rle"}]`, run lengths starting with background.
    #[pyo3(signature = (image, id="image"))]
    fn segment<'py>(&self, py: Python<'py>, image: &PyImage, id: &str) -> PyResult<Bound<'py, PyAny>> {
        let sample = Sample::new(id, image.0.clone());
        let masks = py
            .detach(|| -> core::Result<_> {
                let seg = self.0.segment(&self.0.prepare(&sample))?;
                let (h, w) = (sample.image.height(), sample.image.width());
                self.0.regions(&seg.resize(h, w))
            })
            .map_err(err)?;
        let out: Vec<serde_json::Value> = self
            .0
            .model()
            .kept()
            .iter()
            .zip(&masks)
            .map(|(k, m)| serde_json::json!({ "component": k, "area": m.area(), "rle": m.rle() }))
            .collect();
        to_py(py, &out)
    }

    /// AUROC table and per-image records for `<dataset>/test`.
    #[pyo3(signature = (dataset, policy=None))]
    fn benchmark<'py>(&self, py: Python<'py>, dataset: PathBuf, policy: Option<&PyPolicy>) -> PyResult<Bound<'py, PyAny>> {
        let policy = policy_or_default(policy);
        let report = py
            .detach(|| -> core::Result<_> {
                let ds = load_dataset(&dataset)?;
                run_benchmark(&self.0, &policy, &ds.test)
            })
            .map_err(err)?;
        to_py(py, &report)
    }
}

/// Trains on every PNG under `<dataset>/train/good`.
#[pyfunction]
#[pyo3(signature = (dataset, config=None))]
fn train(py: Python<'_>, dataset: PathBuf, config: Option<&PyRunConfig>) -> PyResult<PyModel> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    py.detach(|| -> core::Result<_> {
        cfg.validate()?;
        let ds = load_dataset(&dataset)?;
        let extractor = build_extractor(&cfg.features)?;
        core::detector::train(&ds.train, extractor.as_ref(), &cfg)
    })
    .map(PyModel)
    .map_err(err)
}

/// Trains on in-memory `(id, image)` pairs.
#[pyfunction]
#[pyo3(signature = (images, config=None))]
fn train_images(py: Python<'_>, images: Vec<(String, PyImage)>, config: Option<&PyRunConfig>) -> PyResult<PyModel> {
    let cfg = config.map(|c| c.0.clone()).unwrap_or_default();
    let samples: Vec<Sample> = images.into_iter().map(|(id, img)| Sample::new(id, img.0)).collect();
    py.detach(|| -> core::Result<_> {
        cfg.validate()?;
        let extractor = build_extractor(&cfg.features)?;
        core::detector::train(&samples, extractor.as_ref(), &cfg)
    })
    .map(PyModel)
    .map_err(err)
}

/// Writes a synthetic product dataset; `defects` maps defect kinds
/// (`missing`, `extra_instance`, `color_swap`, ...) to image counts.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0, n_train=50, n_test_good=40, defects=None))]
fn gen_dataset(
    out_dir: PathBuf,
    seed: u64,
    n_train: usize,
    n_test_good: usize,
    defects: Option<std::collections::BTreeMap<String, usize>>,
) -> PyResult<()> {
    let defects = match defects {
        Some(map) => map
            .into_iter()
            .map(|(name, n)| {
                DefectKind::parse(&name).map(|k| (k, n)).ok_or_else(|| PyValueError::new_err(format!("unknown defect kind `{name}`")))
            })
            .collect::<PyResult<Vec<_>>>()?,
        None => SplitSpec::default().defects,
    };
    let split = SplitSpec { n_train, n_test_good, defects };
    let ds = gen_product_dataset(&SceneSpec::default(), &split, seed).map_err(err)?;
    write_dataset(&ds, out_dir).map_err(err)
}

/// Rank AUROC of anomalous against normal scores.
#[pyfunction]
fn auroc(normal: Vec<f64>, anomalous: Vec<f64>) -> PyResult<f64> {
    auroc_split(&normal, &anomalous).map_err(err)
}

/// OTSU threshold of a row-major field with values in [0, 1].
#[pyfunction]
fn otsu(values: Vec<f64>, height: usize, width: usize) -> PyResult<f64> {
    let field = ScalarField::new(height, width, values).map_err(err)?;
    core::region::otsu(&field).map_err(err)
}

/// Reads a feature file as `(rows, cols, dim, values)`.
#[pyfunction]
fn read_features(path: PathBuf) -> PyResult<(usize, usize, usize, Vec<f32>)> {
    let f = read_feature_file(path).map_err(err)?;
    Ok((f.rows(), f.cols(), f.dim(), f.values().to_vec()))
}

/// Writes a row-major `rows x cols x dim` feature grid.
#[pyfunction]
fn write_features(path: PathBuf, rows: usize, cols: usize, dim: usize, values: Vec<f32>) -> PyResult<()> {
    let f = FeatureMap::new(rows, cols, dim, values).map_err(err)?;
    write_feature_file(&f, path).map_err(err)
}

#[pymodule]
fn cmad(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CmadError", m.py().get_type::<CmadError>())?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDetector>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(train_images, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(otsu, m)?)?;
    m.add_function(wrap_pyfunction!(read_features, m)?)?;
    m.add_function(wrap_pyfunction!(write_features, m)?)?;
    Ok(())
}
