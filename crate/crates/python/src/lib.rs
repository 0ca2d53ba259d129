//! Python bindings: losses with gradients, metrics, synthetic data,
//! training, gradient checks and experiments.

use std::str::FromStr;

use dicekit::data::ClassCounts;
use dicekit::experiment::{self, ResultRow, SeedTag};
use dicekit::trainer::{predict, Arch};
use dicekit::{
    batch_mean_loss, confusion, gradcheck_all, metrics_from_counts, ClassWeights, ClassifierMetrics, DataSpec,
    ExperimentConfig, LabeledBatch, LossKind, LossSpec, ModelSpec, OneHotLabel, ProbPair, TrainSpec, TransformKind,
    TransformSpec,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: dicekit::Error) -> PyErr {
    if e.is_usage()
        || matches!(
            e,
            dicekit::Error::NaN(_)
                | dicekit::Error::InvalidProbability { .. }
                | dicekit::Error::InvalidLabel { .. }
                | dicekit::Error::Singular(_)
                | dicekit::Error::EmptyBatch
                | dicekit::Error::LengthMismatch { .. }
                | dicekit::Error::DimensionMismatch { .. }
                | dicekit::Error::AtIndex { .. }
                | dicekit::Error::Parse(_)
        )
    {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn label(y1: u8) -> PyResult<OneHotLabel> {
    OneHotLabel::new(1u8.saturating_sub(y1), y1).map_err(err)
}

fn metrics_dict<'py>(py: Python<'py>, m: &ClassifierMetrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("precision", m.precision)?;
    d.set_item("recall", m.recall)?;
    d.set_item("f1", m.f1)?;
    d.set_item("accuracy", m.accuracy)?;
    Ok(d)
}

/// Loss kind plus hyperparameters.
#[pyclass(name = "LossSpec", module = "dicekit", frozen)]
struct PyLossSpec {
    inner: LossSpec,
}

#[pymethods]
impl PyLossSpec {
    #[new]
    #[pyo3(signature = (kind, alpha=None, beta=None, gamma=None, k=None, detach_weight=None))]
    fn new(
        kind: &str,
        alpha: Option<f64>,
        beta: Option<f64>,
        gamma: Option<f64>,
        k: Option<f64>,
        detach_weight: Option<bool>,
    ) -> PyResult<Self> {
        let mut spec = LossSpec::new(LossKind::from_str(kind).map_err(err)?);
        spec.alpha = alpha.unwrap_or(spec.alpha);
        spec.beta = beta.unwrap_or(spec.beta);
        spec.gamma = gamma.unwrap_or(spec.gamma);
        spec.k = k.unwrap_or(spec.k);
        spec.detach_weight = detach_weight.unwrap_or(spec.detach_weight);
        spec.validate().map_err(err)?;
        Ok(Self { inner: spec })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind.name()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[getter]
    fn detach_weight(&self) -> bool {
        self.inner.detach_weight
    }

    /// `(value, d value / d p1)` for one example.
    #[pyo3(signature = (p1, y1, class_weight=1.0))]
    fn value_and_grad(&self, p1: f64, y1: u8, class_weight: f64) -> PyResult<(f64, f64)> {
        let p = ProbPair::from_p1(p1).map_err(err)?;
        let r = dicekit::loss::sample_loss(&self.inner, p, label(y1)?, class_weight).map_err(err)?;
        Ok((r.value, r.dvalue_dp1))
    }

    /// Mean loss over a batch and the gradient for every example.
    /// `class_weights` is `(negative, positive)` and is required for WCE and FL.
    #[pyo3(signature = (p1s, y1s, class_weights=None))]
    fn batch(&self, p1s: Vec<f64>, y1s: Vec<u8>, class_weights: Option<(f64, f64)>) -> PyResult<(f64, Vec<f64>)> {
        let ps = p1s
            .into_iter()
            .map(ProbPair::from_p1)
            .collect::<dicekit::Result<Vec<_>>>()
            .map_err(err)?;
        let ys = y1s.into_iter().map(label).collect::<PyResult<Vec<_>>>()?;
        let cw = class_weights.map(|(negative, positive)| ClassWeights { negative, positive });
        let r = batch_mean_loss(&self.inner, &ps, &ys, cw).map_err(err)?;
        Ok((r.value, r.grads))
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "LossSpec(kind='{}', alpha={}, beta={}, gamma={}, k={}, detach_weight={})",
            s.kind.name(),
            s.alpha,
            s.beta,
            s.gamma,
            s.k,
            if s.detach_weight { "True" } else { "False" }
        )
    }
}

/// Labeled feature vectors.
#[pyclass(name = "Dataset", module = "dicekit", frozen)]
struct PyDataset {
    inner: LabeledBatch,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.features().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.golds()
    }

    /// `(negative, positive)` counts.
    #[getter]
    fn counts(&self) -> (usize, usize) {
        let ClassCounts { negative, positive } = self.inner.counts();
        (negative, positive)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_csv(&mut buf).map_err(err)?;
        String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: LabeledBatch::read_csv(text.as_bytes()).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        let c = self.inner.counts();
        format!("Dataset(positive={}, negative={})", c.positive, c.negative)
    }
}

#[pyclass(name = "TrainedModel", module = "dicekit", frozen)]
struct PyTrainedModel {
    inner: dicekit::TrainedModel,
}

#[pymethods]
impl PyTrainedModel {
    #[getter]
    fn parameters(&self) -> Vec<f64> {
        self.inner.parameters().to_vec()
    }

    /// Per-epoch `(mean loss, train F1)`.
    #[getter]
    fn history(&self) -> Vec<(f64, f64)> {
        self.inner.history().iter().map(|e| (e.mean_loss, e.train_f1)).collect()
    }

    /// Positive-class probability for one feature vector.
    fn forward(&self, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.forward(&x).map_err(err)?.p1())
    }

    #[pyo3(signature = (data, threshold=0.5))]
    fn predict(&self, data: &PyDataset, threshold: f64) -> PyResult<Vec<u8>> {
        predict(&self.inner, &data.inner, threshold).map_err(err)
    }

    #[pyo3(signature = (data, threshold=0.5))]
    fn evaluate<'py>(&self, py: Python<'py>, data: &PyDataset, threshold: f64) -> PyResult<Bound<'py, PyDict>> {
        let m = dicekit::evaluate(&self.inner, &data.inner, threshold).map_err(err)?;
        metrics_dict(py, &m)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: dicekit::TrainedModel::from_json(text).map_err(err)?,
        })
    }
}

#[pyfunction]
#[pyo3(signature = (n_positive=200, ratio=1.0, easy_fraction=0.9, dim=2, seed=0, jitter_sigma=0.1))]
fn generate(
    n_positive: usize,
    ratio: f64,
    easy_fraction: f64,
    dim: usize,
    seed: u64,
    jitter_sigma: f64,
) -> PyResult<PyDataset> {
    let spec = DataSpec {
        n_positive,
        ratio,
        easy_negative_fraction: easy_fraction,
        feature_dim: dim,
        seed,
        jitter_sigma,
    };
    Ok(PyDataset {
        inner: dicekit::generate(&spec).map_err(err)?,
    })
}

/// Resample a dataset: `original`, `add_positive`, `add_negative`,
/// `downsample_negative` or `add_both`.
#[pyfunction]
#[pyo3(signature = (data, kind, target_fraction_positive=0.5, seed=0, jitter_sigma=0.1, growth_factor=None))]
fn transform(
    data: &PyDataset,
    kind: &str,
    target_fraction_positive: f64,
    seed: u64,
    jitter_sigma: f64,
    growth_factor: Option<f64>,
) -> PyResult<PyDataset> {
    let mut spec = TransformSpec::new(TransformKind::from_str(kind).map_err(err)?, target_fraction_positive);
    if let Some(g) = growth_factor {
        spec.growth_factor = g;
    }
    Ok(PyDataset {
        inner: dicekit::transform(&data.inner, &spec, seed, jitter_sigma).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (
    data, loss, arch="linear", hidden_units=16, learning_rate=0.1, epochs=200, batch_size=64, seed=0, init_scale=0.1
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    data: &PyDataset,
    loss: &PyLossSpec,
    arch: &str,
    hidden_units: usize,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    init_scale: f64,
) -> PyResult<PyTrainedModel> {
    let arch = match arch {
        "linear" => Arch::Linear,
        "mlp" => Arch::Mlp,
        other => return Err(PyValueError::new_err(format!("unknown arch `{other}`"))),
    };
    let model = ModelSpec {
        arch,
        hidden_units,
        ..Default::default()
    };
    let spec = TrainSpec {
        learning_rate,
        epochs,
        batch_size,
        seed,
        init_scale,
    };
    let inner = py
        .detach(|| dicekit::train(&data.inner, &loss.inner, &model, &spec))
        .map_err(err)?;
    Ok(PyTrainedModel { inner })
}

/// Precision, recall, F1 and accuracy of hard predictions.
#[pyfunction]
fn metrics<'py>(py: Python<'py>, preds: Vec<u8>, golds: Vec<u8>) -> PyResult<Bound<'py, PyDict>> {
    let c = confusion(&preds, &golds).map_err(err)?;
    metrics_dict(py, &metrics_from_counts(&c))
}

#[pyfunction]
fn set_dice(preds: Vec<u8>, golds: Vec<u8>) -> PyResult<f64> {
    dicekit::set_dice(&preds, &golds).map_err(err)
}

/// Finite-difference check of every loss gradient; one dict per loss kind.
#[pyfunction]
#[pyo3(signature = (samples=200, seed=0))]
fn gradcheck<'py>(py: Python<'py>, samples: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    if samples == 0 {
        return Err(PyValueError::new_err("samples must be at least 1"));
    }
    let reports = py.detach(|| gradcheck_all(samples, seed)).map_err(err)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("loss_kind", r.loss_kind.name())?;
            d.set_item("sample_count", r.sample_count)?;
            d.set_item("max_rel_error", r.max_rel_error)?;
            d.set_item("max_abs_error", r.max_abs_error)?;
            d.set_item("worst_p1", r.worst_input.p1)?;
            d.set_item("worst_y1", r.worst_input.y1)?;
            d.set_item("passed", r.passed)?;
            Ok(d)
        })
        .collect()
}

fn rows_out<'py>(py: Python<'py>, rows: &[ResultRow], as_csv: bool) -> PyResult<Py<PyAny>> {
    if as_csv {
        return Ok(experiment::to_csv_string(rows).into_pyobject(py)?.into_any().unbind());
    }
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let d = metrics_dict(py, &r.metrics())?;
        d.set_item("loss", r.loss.name())?;
        d.set_item("ratio", r.ratio)?;
        d.set_item("transform", r.transform.name())?;
        d.set_item("alpha", r.alpha)?;
        d.set_item("beta", r.beta)?;
        d.set_item("gamma", r.gamma)?;
        match r.seed {
            SeedTag::Seed(s) => d.set_item("seed", s)?,
            tag => d.set_item("seed", tag.to_string())?,
        }
        out.push(d);
    }
    Ok(out.into_pyobject(py)?.into_any().unbind())
}

fn config(json: Option<&str>) -> PyResult<ExperimentConfig> {
    match json {
        None => Ok(ExperimentConfig::default()),
        Some(s) => ExperimentConfig::from_json(s).map_err(err),
    }
}

/// Runs an experiment config given as JSON (defaults when omitted). Returns
/// result rows as dicts, or the CSV text with `as_csv=True`.
#[pyfunction]
#[pyo3(signature = (config_json=None, as_csv=false))]
fn run_experiment(py: Python<'_>, config_json: Option<&str>, as_csv: bool) -> PyResult<Py<PyAny>> {
    let c = config(config_json)?;
    let rows = py.detach(|| experiment::run(&c)).map_err(err)?;
    rows_out(py, &rows, as_csv)
}

#[pyfunction]
#[pyo3(signature = (losses, ratios, config_json=None, as_csv=false))]
fn sweep(
    py: Python<'_>,
    losses: Vec<String>,
    ratios: Vec<f64>,
    config_json: Option<&str>,
    as_csv: bool,
) -> PyResult<Py<PyAny>> {
    let c = config(config_json)?;
    let kinds = losses
        .iter()
        .map(|s| LossKind::from_str(s))
        .collect::<dicekit::Result<Vec<_>>>()
        .map_err(err)?;
    let rows = py.detach(|| experiment::sweep(&c, &kinds, &ratios)).map_err(err)?;
    rows_out(py, &rows, as_csv)
}

#[pyfunction]
#[pyo3(signature = (alphas, config_json=None, as_csv=false))]
fn sweep_tversky(py: Python<'_>, alphas: Vec<f64>, config_json: Option<&str>, as_csv: bool) -> PyResult<Py<PyAny>> {
    let mut c = config(config_json)?;
    if config_json.is_none() {
        c.loss = LossSpec::new(LossKind::Tversky);
    }
    let rows = py.detach(|| experiment::sweep_tversky(&c, &alphas)).map_err(err)?;
    rows_out(py, &rows, as_csv)
}

#[pymodule(name = "dicekit")]
fn dicekit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLossSpec>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTrainedModel>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(transform, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(set_dice, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_tversky, m)?)?;
    m.add("LOSS_KINDS", LossKind::ALL.map(|k| k.name()).to_vec())?;
    Ok(())
}
