//! Python bindings. Arrays cross the boundary as plain lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use brushbandit::bandit::{self as core_bandit, PriorSpec};
use brushbandit::config::FileConfig;
use brushbandit::env::{self as core_env, ModelRecord as CoreModel};
use brushbandit::features::{self as core_features, CostParams};
use brushbandit::fit::{self as core_fit, FitConfig, FitObservation};
use brushbandit::sim::{self as core_sim, Policy, StudyConfig};
use brushbandit::sweep::{self as core_sweep, Criterion};
use brushbandit::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::FileNotFound(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn array<const N: usize>(name: &str, v: Vec<f64>) -> PyResult<[f64; N]> {
    let len = v.len();
    v.try_into()
        .map_err(|_| PyValueError::new_err(format!("{name} must have {N} entries, got {len}")))
}

fn cost_params(xi1: f64, xi2: f64, gamma: f64) -> PyResult<CostParams> {
    let p = CostParams {
        xi1,
        xi2,
        gamma,
        ..CostParams::default()
    };
    p.validate().map_err(to_py)?;
    Ok(p)
}

#[pyfunction]
fn brushing_quality(duration_s: f64, pressure_s: f64) -> PyResult<f64> {
    core_features::brushing_quality(duration_s, pressure_s).map_err(to_py)
}

#[pyfunction]
fn discount_weight_constant(gamma: f64) -> PyResult<f64> {
    core_features::discount_weight_constant(gamma).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (b_bar, a_bar, action, xi1=100.0, xi2=100.0, gamma=core_features::DEFAULT_GAMMA))]
fn cost_term(b_bar: f64, a_bar: f64, action: u8, xi1: f64, xi2: f64, gamma: f64) -> PyResult<f64> {
    Ok(core_features::cost_term(b_bar, a_bar, action, &cost_params(xi1, xi2, gamma)?))
}

#[pyfunction]
fn surrogate_reward(quality: f64, cost: f64) -> f64 {
    core_features::surrogate_reward(quality, cost)
}

/// One fitted or synthetic user environment.
#[pyclass(name = "ModelRecord", from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: CoreModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (id, w_b, w_p, effects=None))]
    fn new(id: String, w_b: Vec<f64>, w_p: Vec<f64>, effects: Option<(f64, f64)>) -> PyResult<Self> {
        let inner = CoreModel {
            id,
            w_b: array("w_b", w_b)?,
            w_p: array("w_p", w_p)?,
            effects,
        };
        inner.to_env_model().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }
    #[getter]
    fn w_b(&self) -> Vec<f64> {
        self.inner.w_b.to_vec()
    }
    #[getter]
    fn w_p(&self) -> Vec<f64> {
        self.inner.w_p.to_vec()
    }
    #[getter]
    fn effects(&self) -> Option<(f64, f64)> {
        self.inner.effects
    }

    /// `(p_zero, lambda)` for features `g` (6) and `h` (5).
    #[pyo3(signature = (g, h, action, e=0.0))]
    fn zip_params(&self, g: Vec<f64>, h: Vec<f64>, action: u8, e: f64) -> PyResult<(f64, f64)> {
        let model = self.inner.to_env_model().map_err(to_py)?;
        let z = model
            .zip_params(&array("g", g)?, &array("h", h)?, action, e)
            .map_err(to_py)?;
        Ok((z.p_zero, z.lambda))
    }

    fn __repr__(&self) -> String {
        format!("ModelRecord(id={:?})", self.inner.id)
    }
}

#[pyfunction]
fn synthetic_pool(seed: u64) -> Vec<PyModel> {
    brushbandit::synthetic::synthetic_pool(seed)
        .into_iter()
        .map(|inner| PyModel { inner })
        .collect()
}

#[pyfunction]
fn read_models(path: PathBuf) -> PyResult<Vec<PyModel>> {
    Ok(core_env::read_models_file(&path)
        .map_err(to_py)?
        .into_iter()
        .map(|inner| PyModel { inner })
        .collect())
}

#[pyfunction]
fn write_models(path: PathBuf, models: Vec<PyModel>) -> PyResult<()> {
    let records: Vec<_> = models.into_iter().map(|m| m.inner).collect();
    core_env::write_models_file(&path, &records).map_err(to_py)
}

/// MAP fit of one user's zero-inflated Poisson model.
///
/// `observations` is a list of `(g, q)` pairs with `g` the six baseline features.
#[pyfunction]
#[pyo3(signature = (observations, restarts=50, max_iterations=1000, seed=0))]
fn fit_user<'py>(
    py: Python<'py>,
    observations: Vec<(Vec<f64>, f64)>,
    restarts: usize,
    max_iterations: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let obs = observations
        .into_iter()
        .map(|(g, q)| Ok(FitObservation { g: array("g", g)?, q }))
        .collect::<PyResult<Vec<_>>>()?;
    let config = FitConfig {
        restarts,
        max_iterations,
        ..FitConfig::default()
    };
    let mut rng = core_sim::stream_rng(seed, 0, 0);
    let fit = py
        .detach(|| core_fit::fit_user_model(&obs, &config, &mut rng))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("w_b", fit.w_b.to_vec())?;
    d.set_item("w_p", fit.w_p.to_vec())?;
    d.set_item("log_posterior", fit.log_posterior)?;
    d.set_item("converged_restarts", fit.converged_restarts)?;
    d.set_item("small_data", fit.small_data)?;
    Ok(d)
}

#[pyclass(name = "DecisionRecord", from_py_object)]
#[derive(Clone)]
struct PyDecision {
    inner: core_bandit::DecisionRecord,
}

#[pymethods]
impl PyDecision {
    #[new]
    #[pyo3(signature = (m, f, pi, action, surrogate_reward, user_id=0, decision_index=1, slot=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        m: Vec<f64>,
        f: Vec<f64>,
        pi: f64,
        action: u8,
        surrogate_reward: f64,
        user_id: usize,
        decision_index: u32,
        slot: u32,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: core_bandit::DecisionRecord {
                user_id,
                decision_index,
                slot,
                m: array("m", m)?,
                f: array("f", f)?,
                pi_tilde: pi,
                pi,
                action,
                quality: surrogate_reward,
                cost: 0.0,
                surrogate_reward,
            },
        })
    }

    #[getter]
    fn user_id(&self) -> usize {
        self.inner.user_id
    }
    #[getter]
    fn decision_index(&self) -> u32 {
        self.inner.decision_index
    }
    #[getter]
    fn slot(&self) -> u32 {
        self.inner.slot
    }
    #[getter]
    fn m(&self) -> Vec<f64> {
        self.inner.m.to_vec()
    }
    #[getter]
    fn f(&self) -> Vec<f64> {
        self.inner.f.to_vec()
    }
    #[getter]
    fn pi_tilde(&self) -> f64 {
        self.inner.pi_tilde
    }
    #[getter]
    fn pi(&self) -> f64 {
        self.inner.pi
    }
    #[getter]
    fn action(&self) -> u8 {
        self.inner.action
    }
    #[getter]
    fn quality(&self) -> f64 {
        self.inner.quality
    }
    #[getter]
    fn cost(&self) -> f64 {
        self.inner.cost
    }
    #[getter]
    fn surrogate_reward(&self) -> f64 {
        self.inner.surrogate_reward
    }
    fn phi(&self) -> Vec<f64> {
        self.inner.phi().iter().copied().collect()
    }
}

/// Gaussian posterior over the 13 reward-model coefficients.
#[pyclass(name = "Posterior")]
struct PyPosterior {
    inner: core_bandit::PosteriorState,
}

#[pymethods]
impl PyPosterior {
    /// The default informative prior.
    #[staticmethod]
    fn prior() -> Self {
        Self {
            inner: core_bandit::PosteriorState::from_prior(&PriorSpec::default()),
        }
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.iter().copied().collect()
    }
    #[getter]
    fn sigma(&self) -> Vec<Vec<f64>> {
        self.inner
            .sigma
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
    #[getter]
    fn sigma2(&self) -> f64 {
        self.inner.sigma2
    }

    /// Posterior probability that the advantage `f'beta` is positive.
    fn prob_positive_advantage(&self, f: Vec<f64>) -> PyResult<f64> {
        Ok(core_bandit::prob_positive_advantage(&self.inner, &array("f", f)?))
    }
}

/// Conjugate update of the default prior on every given record.
#[pyfunction]
fn posterior_update(records: Vec<PyDecision>) -> PyResult<PyPosterior> {
    let batch: Vec<_> = records.into_iter().map(|r| r.inner).collect();
    Ok(PyPosterior {
        inner: core_bandit::posterior_update(&PriorSpec::default(), &batch).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (pi, min=0.1, max=0.9))]
fn clip(pi: f64, min: f64, max: f64) -> PyResult<f64> {
    Ok(core_bandit::clip(pi, core_bandit::ClipBounds::new(min, max).map_err(to_py)?))
}

#[pyclass(name = "StudyResult")]
struct PyStudyResult {
    inner: core_sim::StudyResult,
}

#[pymethods]
impl PyStudyResult {
    fn mean_quality(&self) -> f64 {
        self.inner.mean_quality()
    }
    fn mean_surrogate_reward(&self) -> f64 {
        self.inner.mean_surrogate_reward()
    }
    fn send_rate(&self) -> f64 {
        self.inner.send_rate()
    }
    fn cumulative_qualities(&self) -> Vec<f64> {
        self.inner.cumulative_qualities()
    }
    fn mean_cumulative_quality(&self) -> f64 {
        core_sim::mean_cumulative_quality(&self.inner)
    }
    fn percentile25_cumulative_quality(&self) -> f64 {
        core_sim::percentile25_cumulative_quality(&self.inner)
    }
    #[getter]
    fn log(&self) -> Vec<PyDecision> {
        self.inner
            .log
            .iter()
            .map(|r| PyDecision { inner: r.clone() })
            .collect()
    }
    fn final_posterior(&self) -> PyPosterior {
        PyPosterior {
            inner: self.inner.final_posterior.clone(),
        }
    }
    fn __len__(&self) -> usize {
        self.inner.log.len()
    }
}

fn load_config(config: Option<PathBuf>) -> PyResult<FileConfig> {
    match config {
        Some(p) => FileConfig::load(&p).map_err(to_py),
        None => Ok(FileConfig::default()),
    }
}

fn resolve_pool(models: Option<Vec<PyModel>>, seed: u64) -> Vec<CoreModel> {
    match models {
        Some(m) => m.into_iter().map(|m| m.inner).collect(),
        None => brushbandit::synthetic::synthetic_pool(seed),
    }
}

/// Simulate one study. Without `models` the built-in synthetic pool is used.
#[pyfunction]
#[pyo3(signature = (models=None, config=None, seed=None, xi1=None, xi2=None, e=None, trial=0, n_users=None, t_decisions=None, send_probability=None))]
#[allow(clippy::too_many_arguments)]
fn run_study(
    py: Python<'_>,
    models: Option<Vec<PyModel>>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    xi1: Option<f64>,
    xi2: Option<f64>,
    e: Option<f64>,
    trial: u64,
    n_users: Option<usize>,
    t_decisions: Option<u32>,
    send_probability: Option<f64>,
) -> PyResult<PyStudyResult> {
    let mut study = load_config(config)?.study_config().map_err(to_py)?;
    apply_overrides(&mut study, seed, xi1, xi2, e, n_users, t_decisions);
    if let Some(p) = send_probability {
        study.policy = Policy::FixedProbability(p);
    }
    let pool = resolve_pool(models, study.master_seed);
    let inner = py
        .detach(|| core_sim::run_trial(&study, &pool, &PriorSpec::default(), trial))
        .map_err(to_py)?;
    Ok(PyStudyResult { inner })
}

fn apply_overrides(
    study: &mut StudyConfig,
    seed: Option<u64>,
    xi1: Option<f64>,
    xi2: Option<f64>,
    e: Option<f64>,
    n_users: Option<usize>,
    t_decisions: Option<u32>,
) {
    if let Some(s) = seed {
        study.master_seed = s;
    }
    if let Some(x) = xi1 {
        study.cost_params.xi1 = x;
    }
    if let Some(x) = xi2 {
        study.cost_params.xi2 = x;
    }
    if let Some(e) = e {
        study.effect_shrink = e;
    }
    if let Some(n) = n_users {
        study.n_users = n;
    }
    if let Some(t) = t_decisions {
        study.t_decisions = t;
    }
}

/// Run the grid sweep. Returns a list of dicts, one per cell, with the
/// mean and standard error of both criteria. Writes trials and heatmaps
/// when `output_dir` is given.
#[pyfunction]
#[pyo3(signature = (models=None, config=None, seed=None, xi1_grid=None, xi2_grid=None, e_values=None, trials=None, n_users=None, t_decisions=None, output_dir=None))]
#[allow(clippy::too_many_arguments)]
fn run_sweep<'py>(
    py: Python<'py>,
    models: Option<Vec<PyModel>>,
    config: Option<PathBuf>,
    seed: Option<u64>,
    xi1_grid: Option<Vec<f64>>,
    xi2_grid: Option<Vec<f64>>,
    e_values: Option<Vec<f64>>,
    trials: Option<usize>,
    n_users: Option<usize>,
    t_decisions: Option<u32>,
    output_dir: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut sweep = load_config(config)?.sweep_config().map_err(to_py)?;
    apply_overrides(&mut sweep.study, seed, None, None, None, n_users, t_decisions);
    if let Some(g) = xi1_grid {
        sweep.xi1_grid = g;
    }
    if let Some(g) = xi2_grid {
        sweep.xi2_grid = g;
    }
    if let Some(v) = e_values {
        sweep.e_values = v;
    }
    if let Some(t) = trials {
        sweep.mc_trials = t;
    }
    let pool = resolve_pool(models, sweep.study.master_seed);
    let result = py
        .detach(|| core_sweep::run_sweep(&sweep, &pool, &PriorSpec::default()))
        .map_err(to_py)?;
    if let Some(dir) = output_dir {
        core_sweep::write_outputs(&result, &dir).map_err(to_py)?;
    }
    result
        .cells
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("E", c.e)?;
            d.set_item("xi1", c.xi1)?;
            d.set_item("xi2", c.xi2)?;
            for crit in Criterion::ALL {
                let est = c.estimate(crit);
                d.set_item(crit.slug(), est.mean)?;
                d.set_item(format!("{}_se", crit.slug()), est.std_error)?;
            }
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "brushbandit")]
fn brushbandit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(brushing_quality, m)?)?;
    m.add_function(wrap_pyfunction!(discount_weight_constant, m)?)?;
    m.add_function(wrap_pyfunction!(cost_term, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_reward, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_pool, m)?)?;
    m.add_function(wrap_pyfunction!(read_models, m)?)?;
    m.add_function(wrap_pyfunction!(write_models, m)?)?;
    m.add_function(wrap_pyfunction!(fit_user, m)?)?;
    m.add_function(wrap_pyfunction!(posterior_update, m)?)?;
    m.add_function(wrap_pyfunction!(clip, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDecision>()?;
    m.add_class::<PyPosterior>()?;
    m.add_class::<PyStudyResult>()?;
    Ok(())
}
