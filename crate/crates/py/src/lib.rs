//! Python bindings: datasets, synthetic bundles, training, evaluation and
//! tuning. The module is importable as `rapmf`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rapmf as core;
use rapmf::eval::{self, Protocol, TrainedModel};
use rapmf::Predict;

create_exception!(
    rapmf,
    NumericalError,
    PyArithmeticError,
    "Training diverged or a gradient probe was not finite."
);

fn py_err(e: core::Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn variant(name: &str) -> PyResult<core::Variant> {
    name.parse()
        .map_err(|e: core::Error| PyValueError::new_err(e.to_string()))
}

/// A set of `(user, item, rating)` triplets on an `n_users x n_items` grid.
#[pyclass(module = "rapmf", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: core::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (n_users, n_items, triplets, d_levels = 5))]
    fn new(n_users: usize, n_items: usize, triplets: Vec<(u32, u32, u32)>, d_levels: u32) -> PyResult<Self> {
        let cells = triplets
            .into_iter()
            .map(|(i, j, x)| core::Triplet::new(i, j, x))
            .collect();
        let inner = core::Dataset::new(n_users, n_items, d_levels, cells).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Reads a whitespace-separated triplet file; dimensions are inferred.
    #[staticmethod]
    #[pyo3(signature = (path, d_levels = 5))]
    fn read(path: PathBuf, d_levels: u32) -> PyResult<Self> {
        let inner = core::Dataset::read_triplets_inferred(&path, d_levels).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_triplets(&path).map_err(py_err)
    }

    fn triplets(&self) -> Vec<(u32, u32, u32)> {
        self.inner
            .triplets()
            .iter()
            .map(|t| (t.user, t.item, t.rating))
            .collect()
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn d_levels(&self) -> u32 {
        self.inner.d_levels()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} ratings, {}x{}, {} levels)",
            self.inner.len(),
            self.inner.n_users(),
            self.inner.n_items(),
            self.inner.d_levels()
        )
    }
}

/// Training hyperparameters; every field can be set by keyword.
#[pyclass(module = "rapmf", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct Hyperparams {
    k: usize,
    lambda_u: f64,
    lambda_v: f64,
    lambda_mu: f64,
    beta: f64,
    eta: f64,
    sigma_r: f64,
    iterations: usize,
    seed: u64,
    parallel: bool,
}

impl Hyperparams {
    fn from_core(h: &core::Hyperparams) -> Self {
        Self {
            k: h.k,
            lambda_u: h.lambda_u,
            lambda_v: h.lambda_v,
            lambda_mu: h.lambda_mu,
            beta: h.beta,
            eta: h.eta,
            sigma_r: h.sigma_r,
            iterations: h.iterations,
            seed: h.seed,
            parallel: h.execution == core::Execution::Parallel,
        }
    }

    fn to_core(&self) -> core::Hyperparams {
        core::Hyperparams {
            k: self.k,
            lambda_u: self.lambda_u,
            lambda_v: self.lambda_v,
            lambda_mu: self.lambda_mu,
            beta: self.beta,
            eta: self.eta,
            sigma_r: self.sigma_r,
            iterations: self.iterations,
            seed: self.seed,
            execution: if self.parallel {
                core::Execution::Parallel
            } else {
                core::Execution::Serial
            },
        }
    }
}

#[pymethods]
impl Hyperparams {
    /// `lambda_uv` sets both `lambda_u` and `lambda_v`.
    #[new]
    #[pyo3(signature = (*, k = None, lambda_uv = None, lambda_mu = None, beta = None, eta = None, sigma_r = None, iterations = None, seed = None, parallel = false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        k: Option<usize>,
        lambda_uv: Option<f64>,
        lambda_mu: Option<f64>,
        beta: Option<f64>,
        eta: Option<f64>,
        sigma_r: Option<f64>,
        iterations: Option<usize>,
        seed: Option<u64>,
        parallel: bool,
    ) -> Self {
        let mut h = Self::from_core(&core::Hyperparams::default());
        if let Some(v) = lambda_uv {
            h.lambda_u = v;
            h.lambda_v = v;
        }
        h.k = k.unwrap_or(h.k);
        h.lambda_mu = lambda_mu.unwrap_or(h.lambda_mu);
        h.beta = beta.unwrap_or(h.beta);
        h.eta = eta.unwrap_or(h.eta);
        h.sigma_r = sigma_r.unwrap_or(h.sigma_r);
        h.iterations = iterations.unwrap_or(h.iterations);
        h.seed = seed.unwrap_or(h.seed);
        h.parallel = parallel;
        h
    }

    fn validate(&self) -> PyResult<()> {
        self.to_core().validate().map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Hyperparams(k={}, lambda_u={}, lambda_v={}, lambda_mu={}, beta={}, eta={}, sigma_r={}, iterations={}, seed={})",
            self.k, self.lambda_u, self.lambda_v, self.lambda_mu, self.beta, self.eta, self.sigma_r, self.iterations, self.seed
        )
    }
}

/// Settings of the synthetic generator.
#[pyclass(module = "rapmf", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct SyntheticConfig {
    n: usize,
    m: usize,
    d_levels: u32,
    k: usize,
    sigma_u: f64,
    sigma_v: f64,
    p_inspect: f64,
    p_rate: Vec<f64>,
}

impl SyntheticConfig {
    fn to_core(&self) -> core::SyntheticConfig {
        core::SyntheticConfig {
            n: self.n,
            m: self.m,
            d_levels: self.d_levels,
            k: self.k,
            sigma_u: self.sigma_u,
            sigma_v: self.sigma_v,
            p_inspect: self.p_inspect,
            p_rate: self.p_rate.clone(),
        }
    }
}

#[pymethods]
impl SyntheticConfig {
    #[new]
    #[pyo3(signature = (*, n = None, m = None, d_levels = None, k = None, sigma_u = None, sigma_v = None, p_inspect = None, p_rate = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: Option<usize>,
        m: Option<usize>,
        d_levels: Option<u32>,
        k: Option<usize>,
        sigma_u: Option<f64>,
        sigma_v: Option<f64>,
        p_inspect: Option<f64>,
        p_rate: Option<Vec<f64>>,
    ) -> Self {
        let d = core::SyntheticConfig::default();
        Self {
            n: n.unwrap_or(d.n),
            m: m.unwrap_or(d.m),
            d_levels: d_levels.unwrap_or(d.d_levels),
            k: k.unwrap_or(d.k),
            sigma_u: sigma_u.unwrap_or(d.sigma_u),
            sigma_v: sigma_v.unwrap_or(d.sigma_v),
            p_inspect: p_inspect.unwrap_or(d.p_inspect),
            p_rate: p_rate.unwrap_or(d.p_rate),
        }
    }
}

/// A synthetic ground truth together with its protocol split.
#[pyclass(module = "rapmf", frozen)]
struct Bundle {
    truth: Option<core::TruthBundle>,
    seed: u64,
    split: core::ProtocolSplit,
}

#[pymethods]
impl Bundle {
    /// Generates ratings and response masks from `config` and splits them.
    #[staticmethod]
    #[pyo3(signature = (config = None, seed = 0))]
    fn generate(config: Option<PyRef<'_, SyntheticConfig>>, seed: u64) -> PyResult<Self> {
        let cfg = config.map(|c| c.to_core()).unwrap_or_default();
        let truth = core::TruthBundle::generate(&cfg, seed).map_err(py_err)?;
        let split = core::synth::split_protocols(&truth, seed).map_err(py_err)?;
        Ok(Self {
            truth: Some(truth),
            seed,
            split,
        })
    }

    /// Loads the split of a bundle directory written by `write` or the CLI.
    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<Self> {
        let meta = core::bundle::read_meta(&dir).map_err(py_err)?;
        let split = core::bundle::read_split(&dir, &meta).map_err(py_err)?;
        Ok(Self {
            truth: None,
            seed: meta.seed,
            split,
        })
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("bundle was read from disk without its ground truth"))?;
        core::bundle::write_bundle(&dir, truth, &self.split).map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    /// The named part: train, test_traditional, test_realistic,
    /// test_adversarial or validation.
    fn part(&self, name: &str) -> PyResult<Dataset> {
        self.split
            .parts()
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, d)| Dataset { inner: (*d).clone() })
            .ok_or_else(|| PyValueError::new_err(format!("unknown part {name:?}")))
    }

    #[getter]
    fn train(&self) -> Dataset {
        Dataset {
            inner: self.split.train.clone(),
        }
    }

    /// True rating of a cell; only available for generated bundles.
    fn rating(&self, user: usize, item: usize) -> PyResult<u32> {
        let truth = self
            .truth
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("bundle was read from disk without its ground truth"))?;
        if user >= truth.n() || item >= truth.m() {
            return Err(PyIndexError::new_err("cell out of range"));
        }
        Ok(truth.rating(user, item))
    }

    /// Share of all cells that carry an observed rating.
    fn observed_fraction(&self) -> f64 {
        let p = &self.split;
        let cells = p.parts().iter().map(|(_, d)| d.len()).sum::<usize>() as f64;
        (p.train.len() + p.test_traditional.len()) as f64 / cells
    }
}

/// A trained PMF or response-aware model.
#[pyclass(module = "rapmf", frozen)]
struct Model {
    inner: TrainedModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = core::modelfile::load_model(&path).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        core::modelfile::save_model(&self.inner, None, &path).map_err(py_err)
    }

    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant().as_str()
    }

    #[getter]
    fn hyper(&self) -> Hyperparams {
        Hyperparams::from_core(self.inner.hyper())
    }

    /// Objective per iteration for PMF, log-likelihood otherwise.
    #[getter]
    fn trace(&self) -> Vec<f64> {
        self.inner.trace().to_vec()
    }

    fn predict(&self, user: usize, item: usize) -> PyResult<f64> {
        let f = self.inner.factors();
        if user >= f.n_users() || item >= f.n_items() {
            return Err(PyIndexError::new_err("cell out of range"));
        }
        core::pmf::predict(f, user, item, self.inner.d_levels()).map_err(py_err)
    }

    fn rmse(&self, data: PyRef<'_, Dataset>) -> PyResult<f64> {
        eval::rmse(&self.inner, &data.inner).map_err(py_err)
    }

    /// RMSE on the traditional, realistic and adversarial test sets.
    fn evaluate<'py>(&self, py: Python<'py>, bundle: PyRef<'_, Bundle>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        for r in eval::evaluate_split(&self.inner, &bundle.split).map_err(py_err)? {
            out.set_item(r.protocol.as_str(), r.rmse)?;
        }
        Ok(out)
    }

    /// Learned response probability per rating level (`None` for PMF).
    fn response_levels(&self) -> Option<Vec<f64>> {
        match &self.inner {
            TrainedModel::Pmf(_) => None,
            TrainedModel::Rapmf(m) => Some(m.response.levels().iter().map(|&x| core::logistic(x).value).collect()),
        }
    }

    fn user_factors(&self) -> Vec<Vec<f64>> {
        let f = self.inner.factors();
        (0..f.n_users()).map(|i| f.user(i).to_vec()).collect()
    }

    fn item_factors(&self) -> Vec<Vec<f64>> {
        let f = self.inner.factors();
        (0..f.n_items()).map(|j| f.item(j).to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        let f = self.inner.factors();
        format!(
            "Model({}, {}x{}, k={})",
            self.variant(),
            f.n_users(),
            f.n_items(),
            f.k()
        )
    }
}

/// Trains `variant` ("pmf", "rapmf-r" or "rapmf-c") on `data`.
#[pyfunction]
#[pyo3(signature = (data, variant = "pmf", hyper = None))]
fn train(
    py: Python<'_>,
    data: PyRef<'_, Dataset>,
    variant: &str,
    hyper: Option<PyRef<'_, Hyperparams>>,
) -> PyResult<Model> {
    let v = self::variant(variant)?;
    let h = hyper.map(|h| h.to_core()).unwrap_or_default();
    let d = data.inner.clone();
    let inner = py.detach(|| eval::train_variant(v, &d, &h)).map_err(py_err)?;
    Ok(Model { inner })
}

/// Two-stage grid tuning on the bundle's validation set. Returns a dict with
/// the PMF and response-aware winners and their hyperparameters.
#[pyfunction]
#[pyo3(signature = (bundle, variant = "rapmf-r", hyper = None, lambda_uv = None, beta = None, lambda_mu = None, fine_tune = false))]
#[allow(clippy::too_many_arguments)]
fn tune<'py>(
    py: Python<'py>,
    bundle: PyRef<'_, Bundle>,
    variant: &str,
    hyper: Option<PyRef<'_, Hyperparams>>,
    lambda_uv: Option<Vec<f64>>,
    beta: Option<Vec<f64>>,
    lambda_mu: Option<Vec<f64>>,
    fine_tune: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let v = self::variant(variant)?;
    if v == core::Variant::Pmf {
        return Err(PyValueError::new_err("tune needs a response-aware variant"));
    }
    let base = hyper.map(|h| h.to_core()).unwrap_or_default();
    let coarse = eval::Grids::coarse(base.lambda_mu);
    let grids = eval::Grids {
        lambda_uv: lambda_uv.unwrap_or(coarse.lambda_uv),
        beta: beta.unwrap_or(coarse.beta),
        lambda_mu: lambda_mu.unwrap_or(coarse.lambda_mu),
    };
    let split = bundle.split.clone();
    let two = py
        .detach(|| eval::tune_two_stage(&split, v, &base, &grids, fine_tune))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    for (key, outcome) in [("pmf", two.pmf), ("response", two.response)] {
        let entry = PyDict::new(py);
        entry.set_item("hyper", Hyperparams::from_core(&outcome.best))?;
        entry.set_item("validation_rmse", outcome.best_rmse)?;
        entry.set_item("model", outcome.model.map(|inner| Model { inner }))?;
        out.set_item(key, entry)?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (rating, d_levels = 5))]
fn map_rating(rating: u32, d_levels: u32) -> PyResult<f64> {
    core::map_rating(rating, d_levels).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (value, d_levels = 5))]
fn unmap_rating(value: f64, d_levels: u32) -> PyResult<f64> {
    core::unmap_rating(value, d_levels).map_err(py_err)
}

/// Percentage by which `model_rmse` improves on `baseline_rmse`.
#[pyfunction]
fn relative_improvement(baseline_rmse: f64, model_rmse: f64) -> PyResult<f64> {
    eval::relative_improvement(baseline_rmse, model_rmse).map_err(py_err)
}

/// Two-sided paired t-test on `a - b`.
#[pyfunction]
fn paired_t_test<'py>(py: Python<'py>, a: Vec<f64>, b: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let t = eval::paired_t_test(&a, &b).map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("t_stat", t.t_stat)?;
    out.set_item("p_value", t.p_value)?;
    out.set_item("significant", t.significant)?;
    out.set_item("mean_diff", t.mean_diff)?;
    out.set_item("df", t.df)?;
    Ok(out)
}

/// Largest relative gradient error per parameter block on a random instance.
#[pyfunction]
#[pyo3(signature = (variant = "rapmf-c", n = 8, m = 8, k = 3, d_levels = 5, seed = 0, eps = 1e-5))]
#[allow(clippy::too_many_arguments)]
fn gradcheck<'py>(
    py: Python<'py>,
    variant: &str,
    n: usize,
    m: usize,
    k: usize,
    d_levels: u32,
    seed: u64,
    eps: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let inst =
        eval::gradcheck::GradInstance::random(self::variant(variant)?, n, m, k, d_levels, seed).map_err(py_err)?;
    let out = PyDict::new(py);
    for (block, report) in inst.check(eps).map_err(py_err)? {
        out.set_item(block, report.max_rel_error)?;
    }
    Ok(out)
}

#[pymodule(name = "rapmf")]
fn rapmf_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", core::CODE_VERSION)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("PROTOCOLS", Protocol::TEST.map(|p| p.as_str()).to_vec())?;
    m.add_class::<Dataset>()?;
    m.add_class::<Hyperparams>()?;
    m.add_class::<SyntheticConfig>()?;
    m.add_class::<Bundle>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    m.add_function(wrap_pyfunction!(map_rating, m)?)?;
    m.add_function(wrap_pyfunction!(unmap_rating, m)?)?;
    m.add_function(wrap_pyfunction!(relative_improvement, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
