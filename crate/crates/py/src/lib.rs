use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use tiercache::analytic::{
    expected_search_time, occupancy_probability, stateful_miss_prob_exact,
    stateful_miss_prob_large_n, stateless_miss_prob,
};
use tiercache::harness::{
    cmd_analytic, cmd_optimize, cmd_simulate, run_validation, ExperimentConfig, Method, Output,
    Resolved, Scenario, ValidationSettings,
};
use tiercache::optimizer::{bang_bang_ttl, solve_quadratic_knapsack, square_root_allocation, top_b_allocation};
use tiercache::{ContentSpec, DomainConfig, Error, KnapsackMethod, SearchVariant, Ttl};

create_exception!(tiercache_py, TierCacheError, PyValueError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(msg) => PyOSError::new_err(msg),
        other => TierCacheError::new_err(other.to_string()),
    }
}

fn ttl(t: f64) -> PyResult<Ttl> {
    if t == f64::INFINITY {
        Ok(Ttl::Unbounded)
    } else {
        Ttl::finite(t).map_err(py_err)
    }
}

fn domain(n_caches: usize, hop_rate: f64, t: f64) -> PyResult<DomainConfig> {
    DomainConfig::new(n_caches, hop_rate, ttl(t)?).map_err(py_err)
}

fn variant(name: &str) -> PyResult<SearchVariant> {
    match name {
        "stateless" => Ok(SearchVariant::Stateless),
        "stateful_exact" => Ok(SearchVariant::StatefulExact),
        "stateful_large_n" => Ok(SearchVariant::StatefulLargeN),
        _ => Err(PyValueError::new_err(format!("unknown search variant {name:?}"))),
    }
}

/// Stationary probability that a cache holds the content.
#[pyfunction]
#[pyo3(signature = (rate, mu, k_threshold = 0))]
fn occupancy(rate: f64, mu: f64, k_threshold: u32) -> PyResult<f64> {
    let spec = ContentSpec::with_mu(rate, k_threshold, mu).map_err(py_err)?;
    occupancy_probability(&spec).map_err(py_err)
}

/// Probability a walk has not found the content by time `t`.
#[pyfunction]
#[pyo3(signature = (t, n_caches, hop_rate, pi, variant = "stateless"))]
fn miss_prob(t: f64, n_caches: usize, hop_rate: f64, pi: f64, variant: &str) -> PyResult<f64> {
    let dom = domain(n_caches, hop_rate, t)?;
    match self::variant(variant)? {
        SearchVariant::Stateless => stateless_miss_prob(t, &dom, pi),
        SearchVariant::StatefulExact => stateful_miss_prob_exact(t, &dom, pi),
        SearchVariant::StatefulLargeN => stateful_miss_prob_large_n(t, hop_rate, pi),
    }
    .map_err(py_err)
}

/// Expected time spent searching a domain with TTL `ttl` (may be `inf`).
#[pyfunction]
#[pyo3(signature = (ttl, n_caches, hop_rate, pi, variant = "stateless"))]
fn search_time(ttl: f64, n_caches: usize, hop_rate: f64, pi: f64, variant: &str) -> PyResult<f64> {
    let dom = domain(n_caches, hop_rate, ttl)?;
    expected_search_time(self::variant(variant)?, &dom, pi, dom.ttl).map_err(py_err)
}

#[pyfunction]
fn square_root(rates: Vec<f64>, budget: f64) -> PyResult<Vec<f64>> {
    square_root_allocation(&rates, budget).map_err(py_err)
}

#[pyfunction]
fn top_b(rates: Vec<f64>, budget: usize) -> PyResult<Vec<f64>> {
    top_b_allocation(&rates, budget).map_err(py_err)
}

/// Per-content TTL; unbounded search comes back as `inf`.
#[pyfunction]
fn bang_bang(pis: Vec<f64>, custodian_cost: f64, hop_rate: f64) -> Vec<f64> {
    bang_bang_ttl(&pis, custodian_cost, hop_rate)
        .iter()
        .map(Ttl::as_secs)
        .collect()
}

/// Minimises `sum k2 pi^2 + k1 pi` over the box with `sum pi = budget`.
/// Returns `(pis, budget_multiplier, kkt_residual)`.
#[pyfunction]
#[pyo3(signature = (k2, k1, budget, method = "breakpoint"))]
fn quadratic_knapsack(
    k2: Vec<f64>,
    k1: Vec<f64>,
    budget: f64,
    method: &str,
) -> PyResult<(Vec<f64>, f64, f64)> {
    let method = match method {
        "breakpoint" => KnapsackMethod::Breakpoint,
        "dual_gradient" => KnapsackMethod::DualGradient,
        _ => return Err(PyValueError::new_err(format!("unknown method {method:?}"))),
    };
    if k1.len() != k2.len() {
        return Err(PyValueError::new_err("k1 and k2 differ in length"));
    }
    let s = solve_quadratic_knapsack(&k2, &k1, budget, method).map_err(py_err)?;
    Ok((s.pis, s.multiplier, s.kkt_residual))
}

fn files<'py>(py: Python<'py>, out: &Output) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, bytes) in &out.files {
        d.set_item(name, PyBytes::new(py, bytes))?;
    }
    Ok(d)
}

/// A resolved experiment: a named scenario or a JSON configuration.
#[pyclass(frozen)]
struct Experiment {
    cfg: Resolved,
}

#[pymethods]
impl Experiment {
    #[staticmethod]
    fn scenario(name: &str) -> PyResult<Self> {
        let s = Scenario::parse(name).map_err(py_err)?;
        let cfg = ExperimentConfig::scenario(s).resolve().map_err(py_err)?;
        Ok(Experiment { cfg })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = ExperimentConfig::from_json(text).map_err(py_err)?;
        Ok(Experiment {
            cfg: doc.resolve().map_err(py_err)?,
        })
    }

    #[getter]
    fn n_contents(&self) -> usize {
        self.cfg.n_contents()
    }

    /// Output files keyed by name, as bytes.
    fn analytic<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = py.detach(|| cmd_analytic(&self.cfg)).map_err(py_err)?;
        files(py, &out)
    }

    #[pyo3(signature = (method = None))]
    fn optimize<'py>(&self, py: Python<'py>, method: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
        let method = method.map(Method::parse).transpose().map_err(py_err)?;
        let out = py.detach(|| cmd_optimize(&self.cfg, method)).map_err(py_err)?;
        files(py, &out)
    }

    #[pyo3(signature = (seed = None, reps = None, trace = false))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        seed: Option<u64>,
        reps: Option<usize>,
        trace: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let out = py
            .detach(|| cmd_simulate(&self.cfg, seed, reps, trace))
            .map_err(py_err)?;
        files(py, &out)
    }
}

/// Runs the validation suite; returns `(passed, rows)` with one dict per row.
#[pyfunction]
#[pyo3(signature = (z_threshold = 3.0, scale = 1.0, seed = 1))]
fn validate<'py>(
    py: Python<'py>,
    z_threshold: f64,
    scale: f64,
    seed: u64,
) -> PyResult<(bool, Vec<Bound<'py, PyDict>>)> {
    let settings = ValidationSettings {
        z_threshold,
        scale,
        seed,
        ..Default::default()
    };
    let report = py.detach(|| run_validation(&settings)).map_err(py_err)?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("check", &r.check)?;
            d.set_item("quantity", &r.quantity)?;
            d.set_item("expected", r.expected)?;
            d.set_item("observed", r.observed)?;
            d.set_item("se", r.se)?;
            d.set_item("pass", r.passes(z_threshold))?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    Ok((report.passed(), rows))
}

#[pymodule]
fn tiercache_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TierCacheError", m.py().get_type::<TierCacheError>())?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(occupancy, m)?)?;
    m.add_function(wrap_pyfunction!(miss_prob, m)?)?;
    m.add_function(wrap_pyfunction!(search_time, m)?)?;
    m.add_function(wrap_pyfunction!(square_root, m)?)?;
    m.add_function(wrap_pyfunction!(top_b, m)?)?;
    m.add_function(wrap_pyfunction!(bang_bang, m)?)?;
    m.add_function(wrap_pyfunction!(quadratic_knapsack, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
