use std::path::{Path, PathBuf};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use agebandit::harness::experiment::{run_experiment as run_all, write_outputs};
use agebandit::harness::{self, ExperimentConfig, Instance, PolicyName};
use agebandit::learning::{self, ucb_bound as ucb};
use agebandit::metrics;
use agebandit::{BoundInputs, Error};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy_kind(name: &str, eta: f64, alpha: f64) -> PyResult<agebandit::PolicyKind> {
    Ok(PolicyName::parse(name).map_err(py_err)?.kind(eta, alpha))
}

fn instance(config: &str, base_dir: Option<PathBuf>) -> PyResult<Instance> {
    let cfg = ExperimentConfig::from_toml(config).map_err(py_err)?;
    Instance::new(cfg, base_dir.as_deref().unwrap_or(Path::new("."))).map_err(py_err)
}

/// Set of scheduling actions given as 0/1 incidence vectors.
#[pyclass(frozen)]
struct ActionSet(agebandit::ActionSet);

#[pymethods]
impl ActionSet {
    #[new]
    fn new(incidence: Vec<Vec<u8>>) -> PyResult<Self> {
        let arms = incidence.first().map_or(0, Vec::len);
        agebandit::ActionSet::new(arms, incidence)
            .map(Self)
            .map_err(py_err)
    }

    #[staticmethod]
    fn one_of(arms: usize) -> PyResult<Self> {
        agebandit::ActionSet::one_of(arms).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn choose(arms: usize, size: usize) -> PyResult<Self> {
        agebandit::ActionSet::choose(arms, size)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn arms(&self) -> usize {
        self.0.arms()
    }

    #[getter]
    fn i_max(&self) -> usize {
        self.0.i_max()
    }

    fn incidence(&self) -> Vec<Vec<u8>> {
        self.0.iter().map(<[u8]>::to_vec).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Virtual delivery queue of one arm.
#[pyclass]
struct DeliveryQueue(agebandit::DeliveryQueue);

#[pymethods]
impl DeliveryQueue {
    #[new]
    fn new(arrival_prob: f64) -> PyResult<Self> {
        agebandit::DeliveryQueue::new(arrival_prob)
            .map(Self)
            .map_err(py_err)
    }

    /// Opens slot `t`; returns the number of arrivals (0 or 1).
    fn begin_timeslot(&mut self, t: u64, arrived: bool) -> PyResult<u8> {
        self.0.begin_timeslot_with(t, arrived).map_err(py_err)
    }

    /// `(hol_age, queue_len, pseudo_tslr)` inside slot `t`.
    fn snapshot(&self, t: u64) -> PyResult<(u64, u64, u64)> {
        let s = self.0.snapshot(t).map_err(py_err)?;
        Ok((s.hol_age, s.queue_len, s.pseudo_tslr))
    }

    /// Closes slot `t`; returns the number of departures.
    fn end_timeslot(&mut self, t: u64, reward: u8) -> PyResult<u8> {
        self.0.end_timeslot(t, reward).map_err(py_err)
    }

    fn pending(&self) -> Vec<u64> {
        self.0.pending().collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
fn ucb_bound(mean: f64, plays: u64, t: u64) -> f64 {
    ucb(mean, plays, (t as f64).ln())
}

#[pyfunction]
#[pyo3(signature = (policy, eta, ucb, ages, qlens, tslr, alpha = 1.0))]
fn policy_weights(
    policy: &str,
    eta: f64,
    ucb: Vec<f64>,
    ages: Vec<u64>,
    qlens: Vec<u64>,
    tslr: Vec<u64>,
    alpha: f64,
) -> PyResult<Vec<f64>> {
    let k = ucb.len();
    if [ages.len(), qlens.len(), tslr.len()]
        .iter()
        .any(|&n| n != k)
    {
        return Err(PyValueError::new_err(
            "all per-arm inputs need the same length",
        ));
    }
    let kind = policy_kind(policy, eta, alpha)?;
    Ok(learning::policy_weights(kind, &ucb, &ages, &qlens, &tslr))
}

/// Index of the max-weight action; ties go to the lowest index.
#[pyfunction]
fn select_action(weights: Vec<f64>, actions: &ActionSet) -> PyResult<usize> {
    if weights.len() != actions.0.arms() {
        return Err(PyValueError::new_err("one weight per arm expected"));
    }
    Ok(learning::select_action(&weights, &actions.0))
}

#[pyfunction]
fn solve_optimal_static<'py>(
    py: Python<'py>,
    rates: Vec<f64>,
    chi: Vec<f64>,
    actions: &ActionSet,
) -> PyResult<Bound<'py, PyDict>> {
    let r = agebandit::solve_optimal_static(&rates, &chi, &actions.0).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("feasible", r.feasible)?;
    d.set_item("sigma_star", r.sigma_star.map(|s| s.probs().to_vec()))?;
    d.set_item("objective_rate", r.objective_rate)?;
    d.set_item("gamma_max", r.gamma_max)?;
    d.set_item("sigma_gamma", r.sigma_gamma.probs().to_vec())?;
    Ok(d)
}

/// Analytic bounds of the age-based policy: zero-violation window, regret
/// bound at `horizon` and the age-norm bound.
#[pyfunction]
#[pyo3(signature = (chi, rates, eta, eps, gamma, i_max, horizon))]
fn bounds<'py>(
    py: Python<'py>,
    chi: Vec<f64>,
    rates: Vec<f64>,
    eta: f64,
    eps: f64,
    gamma: f64,
    i_max: usize,
    horizon: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let inputs = BoundInputs {
        arms: chi.len(),
        chi,
        rates,
        eta,
        eps,
        gamma,
        i_max,
        horizon,
    };
    let d = PyDict::new(py);
    d.set_item("window", metrics::theorem2_window(&inputs).map_err(py_err)?)?;
    d.set_item(
        "regret",
        metrics::theorem3_regret_bound(&inputs).map_err(py_err)?,
    )?;
    d.set_item("age_norm", metrics::lemma5_bound(&inputs).map_err(py_err)?)?;
    d.set_item("eps_within_slack", inputs.eps_within_slack())?;
    Ok(d)
}

/// Built-in experiment configuration as TOML.
#[pyfunction]
#[pyo3(signature = (name, horizon = None))]
fn preset(name: &str, horizon: Option<u64>) -> PyResult<String> {
    harness::preset(name, horizon)
        .and_then(|c| c.to_toml())
        .map_err(py_err)
}

/// Plays one run of `policy` and returns its summary and the logged
/// windowed throughput per arm.
#[pyfunction]
#[pyo3(signature = (config, policy, run = 0, base_dir = None))]
fn run_once<'py>(
    py: Python<'py>,
    config: &str,
    policy: &str,
    run: u64,
    base_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let inst = instance(config, base_dir)?;
    let kind = policy_kind(policy, inst.config.eta, inst.config.alpha)?;
    let r = py
        .detach(|| harness::run_once(&inst, kind, run))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("policy", r.policy)?;
    d.set_item("seed", r.seed)?;
    d.set_item("final_reward", r.summary.final_reward)?;
    d.set_item("final_regret", r.summary.final_regret)?;
    d.set_item("max_qlen", r.summary.max_qlen)?;
    d.set_item("mean_hol_age", r.summary.mean_hol_age)?;
    d.set_item("mean_tslr", r.summary.mean_tslr)?;
    d.set_item("t", r.log.records.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item(
        "throughput",
        r.log
            .records
            .iter()
            .map(|s| s.throughput.clone())
            .collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Runs every configured policy and writes the CSV outputs to `out`.
#[pyfunction]
#[pyo3(signature = (config, out, base_dir = None))]
fn run_experiment(
    py: Python<'_>,
    config: &str,
    out: PathBuf,
    base_dir: Option<PathBuf>,
) -> PyResult<usize> {
    let inst = instance(config, base_dir)?;
    py.detach(|| {
        let results = run_all(&inst)?;
        write_outputs(&inst, &results, &out)?;
        Ok(results.len())
    })
    .map_err(py_err)
}

#[pymodule]
fn pyagebandit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ActionSet>()?;
    m.add_class::<DeliveryQueue>()?;
    m.add_function(wrap_pyfunction!(ucb_bound, m)?)?;
    m.add_function(wrap_pyfunction!(policy_weights, m)?)?;
    m.add_function(wrap_pyfunction!(select_action, m)?)?;
    m.add_function(wrap_pyfunction!(solve_optimal_static, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_once, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
