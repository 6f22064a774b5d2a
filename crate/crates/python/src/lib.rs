//! Python bindings: datasets, synthetic models, bigNN, denoised bigNN and the
//! rate fit.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use bignn::metrics::{classify_all, empirical_risk as risk};
use bignn::{
    BigNnModel, DenoisedModel, Error, GaussianClassModel, KRule, RateObservation, RngStream,
    SubsampleSource, ValueKind,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Logic(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn flatten(rows: &[Vec<f64>]) -> PyResult<(usize, Vec<f64>)> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok((dim, rows.concat()))
}

fn query_set(rows: &[Vec<f64>]) -> PyResult<bignn::Dataset> {
    let (dim, features) = flatten(rows)?;
    bignn::Dataset::new(dim, features, vec![0; rows.len()]).map_err(py_err)
}

#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: bignn::Dataset,
}

#[pymethods]
impl PyDataset {
    #[new]
    fn new(features: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<Self> {
        if features.len() != labels.len() {
            return Err(PyValueError::new_err("features and labels differ in length"));
        }
        let (dim, flat) = flatten(&features)?;
        let inner = bignn::Dataset::new(dim, flat, labels).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

#[pyclass(name = "GaussianModel", frozen)]
struct PyGaussianModel {
    inner: GaussianClassModel,
}

#[pymethods]
impl PyGaussianModel {
    /// Two unit-variance Gaussians at 0 and 1 with equal priors.
    #[staticmethod]
    #[pyo3(signature = (dim = 5))]
    fn sim1(dim: usize) -> Self {
        PyGaussianModel { inner: GaussianClassModel::sim1(dim) }
    }

    /// Two-component mixtures per class with prior 1/3 on class 1.
    #[staticmethod]
    #[pyo3(signature = (dim = 8))]
    fn sim3(dim: usize) -> Self {
        PyGaussianModel { inner: GaussianClassModel::sim3(dim) }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[pyo3(signature = (n, seed = 0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<PyDataset> {
        let mut rng = RngStream::new(seed, "py-sample", 0);
        let inner = self.inner.sample(n, &mut rng).map_err(py_err)?;
        Ok(PyDataset { inner })
    }

    fn eta(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.eta(&x).map_err(py_err)
    }

    fn bayes_classify(&self, x: Vec<f64>) -> PyResult<u8> {
        self.inner.bayes_classify(&x).map_err(py_err)
    }

    /// Closed form when the model has one, Monte Carlo otherwise.
    #[pyo3(signature = (mc_samples = 1_000_000, seed = 0))]
    fn bayes_risk(&self, mc_samples: usize, seed: u64) -> PyResult<f64> {
        if let Some(r) = self.inner.closed_form_bayes_risk() {
            return Ok(r);
        }
        let mut rng = RngStream::new(seed, "py-bayes", 0);
        Ok(self.inner.bayes_risk(mc_samples, &mut rng).map_err(py_err)?.estimate)
    }
}

#[pyclass(name = "BigNN", frozen)]
struct PyBigNn {
    inner: BigNnModel,
}

#[pymethods]
impl PyBigNn {
    /// Fixed local `k` when given, otherwise the rate rule with `alpha` and `k_o`.
    #[staticmethod]
    #[pyo3(signature = (data, gamma, k = None, alpha = 0.2, k_o = 1.0, seed = 0))]
    fn train(
        py: Python<'_>,
        data: &PyDataset,
        gamma: f64,
        k: Option<usize>,
        alpha: f64,
        k_o: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let rule = match k {
            Some(k) => KRule::Fixed { k },
            None => KRule::Theorem { alpha, k_o },
        };
        let dataset = &data.inner;
        let inner = py
            .detach(|| BigNnModel::train(dataset, gamma, rule, &mut RngStream::new(seed, "py-train", 0)))
            .map_err(py_err)?;
        Ok(PyBigNn { inner })
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s()
    }

    #[getter]
    fn k_local(&self) -> usize {
        self.inner.k_local()
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<u8> {
        self.inner.predict(&x).map_err(py_err)
    }

    fn predict_batch(&self, py: Python<'_>, points: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        let queries = query_set(&points)?;
        py.detach(|| self.inner.predict_batch(&queries)).map_err(py_err)
    }

    fn local_votes(&self, x: Vec<f64>) -> PyResult<Vec<u8>> {
        self.inner.local_votes(&x).map_err(py_err)
    }

    #[pyo3(signature = (path, denoised = None))]
    fn save(&self, path: PathBuf, denoised: Option<&PyDenoised>) -> PyResult<()> {
        bignn::save_model(&path, &self.inner, denoised.map(|d| &d.inner)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "BigNN(s={}, k_local={}, gamma={})",
            self.inner.s(),
            self.inner.k_local(),
            self.inner.gamma()
        )
    }
}

#[pyclass(name = "DenoisedBigNN", frozen)]
struct PyDenoised {
    inner: DenoisedModel,
}

#[pymethods]
impl PyDenoised {
    #[staticmethod]
    #[pyo3(signature = (model, data, theta, repeats, seed = 0, merge = false))]
    fn pretrain(
        py: Python<'_>,
        model: &PyBigNn,
        data: &PyDataset,
        theta: f64,
        repeats: usize,
        seed: u64,
        merge: bool,
    ) -> PyResult<Self> {
        let source = if merge { SubsampleSource::MergeTraining } else { SubsampleSource::Fresh };
        let (bignn, dataset) = (&model.inner, &data.inner);
        let inner = py
            .detach(|| {
                let mut rng = RngStream::new(seed, "py-pretrain", 0);
                bignn::pretrain_with(bignn, dataset, theta, repeats, source, &mut rng)
            })
            .map_err(py_err)?;
        Ok(PyDenoised { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn repeats(&self) -> usize {
        self.inner.repeats()
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    /// Nearest-neighbor lookups performed so far.
    #[getter]
    fn query_count(&self) -> u64 {
        self.inner.query_count()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<u8> {
        self.inner.predict(&x).map_err(py_err)
    }

    fn predict_batch(&self, py: Python<'_>, points: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
        let queries = query_set(&points)?;
        py.detach(|| self.inner.predict_batch(&queries)).map_err(py_err)
    }
}

/// Loads a saved model; returns `(bignn, denoised_or_none)`.
#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<(PyBigNn, Option<PyDenoised>)> {
    let model = bignn::load_model(&path).map_err(py_err)?;
    Ok((
        PyBigNn { inner: model.bignn },
        model.denoised.map(|inner| PyDenoised { inner }),
    ))
}

/// Predictions of a saved model (denoised when present) for a batch of points.
#[pyfunction]
fn predict_file(path: PathBuf, points: Vec<Vec<f64>>) -> PyResult<Vec<u8>> {
    let model = bignn::load_model(&path).map_err(py_err)?;
    classify_all(&model, &query_set(&points)?).map_err(py_err)
}

#[pyfunction]
fn subsample_count(n: usize, gamma: f64) -> PyResult<usize> {
    bignn::subsample_count(n, gamma).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (alpha, n, s, k_o = 1.0))]
fn select_k(alpha: f64, n: usize, s: usize, k_o: f64) -> PyResult<usize> {
    bignn::select_k(alpha, n, s, k_o).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (n_total, s, k_exponent = 0.7, k_o_star = 1.351284))]
fn select_k_sim3(n_total: usize, s: usize, k_exponent: f64, k_o_star: f64) -> PyResult<usize> {
    bignn::select_k_sim3(n_total, s, k_exponent, k_o_star).map_err(py_err)
}

#[pyfunction]
fn empirical_risk(predictions: Vec<u8>, truth: Vec<u8>) -> PyResult<f64> {
    risk(&predictions, &truth).map_err(py_err)
}

/// Shared-slope fit of `log value ~ factor(gamma) + log N` over `(gamma, N, value)` rows.
/// Returns `(slope, stderr, correlation, {gamma: intercept})`.
#[pyfunction]
#[pyo3(signature = (rows, kind = "regret"))]
fn fit_rate(rows: Vec<(f64, usize, f64)>, kind: &str) -> PyResult<(f64, f64, f64, Vec<(f64, f64)>)> {
    let kind = match kind {
        "regret" => ValueKind::Regret,
        "cis" => ValueKind::Cis,
        other => return Err(PyValueError::new_err(format!("unknown value kind {other:?}"))),
    };
    let obs: Vec<RateObservation> = rows
        .into_iter()
        .map(|(gamma, n, value)| RateObservation { gamma, n, value })
        .collect();
    let fit = bignn::fit_rate(&obs, kind).map_err(py_err)?;
    Ok((fit.slope, fit.stderr, fit.correlation, fit.intercepts))
}

#[pymodule]
fn bignn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGaussianModel>()?;
    m.add_class::<PyBigNn>()?;
    m.add_class::<PyDenoised>()?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    m.add_function(wrap_pyfunction!(predict_file, m)?)?;
    m.add_function(wrap_pyfunction!(subsample_count, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(select_k_sim3, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_risk, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    Ok(())
}
