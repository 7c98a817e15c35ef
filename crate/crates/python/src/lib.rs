//! Python bindings: generate or load instances, run the distributed solver,
//! and cross-check against the centralized oracle.

use std::str::FromStr;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dykstra_net::cli::{run_with_config, RunConfig};
use dykstra_net::diagnostics::fit_rate;
use dykstra_net::engine::StopRule;
use dykstra_net::instances::{self, GenParams, InstanceKind};
use dykstra_net::oracle::{centralized_dykstra, certify as certify_point, OracleSettings};
use dykstra_net::topology::{Graph, SchedulePolicy};
use dykstra_net::gap_bound;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A projection problem: an anchor point, one convex set per graph vertex,
/// and optionally a certified optimum.
#[pyclass(name = "Instance", module = "dykstra_net_py")]
struct PyInstance {
    inner: instances::Instance,
}

#[pymethods]
impl PyInstance {
    /// Parses and validates the JSON instance format used by the CLI.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = instances::Instance::from_json(text).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(PyInstance { inner })
    }

    /// Generates a random instance with a known optimum at the origin.
    /// `kind` is one of balls, halfspaces, boxes, mixed or consensus;
    /// `graph` is a topology spec such as "cycle:5".
    #[staticmethod]
    #[pyo3(signature = (kind, m, graph, seed = 0, t_range = None, rho_range = None))]
    fn generate(
        kind: &str,
        m: usize,
        graph: &str,
        seed: u64,
        t_range: Option<(f64, f64)>,
        rho_range: Option<(f64, f64)>,
    ) -> PyResult<Self> {
        let kind = InstanceKind::from_str(kind).map_err(value_err)?;
        let graph = Graph::from_spec(graph).map_err(value_err)?;
        let mut params = GenParams::default();
        if let Some((lo, hi)) = t_range {
            params.t_range = [lo, hi];
        }
        if let Some((lo, hi)) = rho_range {
            params.rho_range = [lo, hi];
        }
        let inner = instances::generate(kind, m, graph, seed, params).map_err(value_err)?;
        Ok(PyInstance { inner })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[getter]
    fn anchor(&self) -> Vec<f64> {
        self.inner.anchor.clone()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.graph.edges().to_vec()
    }

    /// True when a certificate with optimum at the origin is present, which
    /// enables the certified stopping rule.
    #[getter]
    fn is_normalized(&self) -> bool {
        self.inner.is_normalized()
    }

    /// The certified optimum, if the instance carries one.
    #[getter]
    fn x_star(&self) -> Option<Vec<f64>> {
        self.inner.certificate.as_ref().map(|c| c.x_star.clone())
    }

    fn __repr__(&self) -> String {
        format!(
            "Instance(m={}, vertices={}, edges={}, normalized={})",
            self.inner.m,
            self.inner.n_vertices(),
            self.inner.graph.edges().len(),
            self.inner.is_normalized()
        )
    }
}

/// Outcome of a solver run.
#[pyclass(name = "RunResult", module = "dykstra_net_py")]
struct PyRunResult {
    /// Final primal image per vertex.
    #[pyo3(get)]
    points: Vec<Vec<f64>>,
    #[pyo3(get)]
    final_f: f64,
    #[pyo3(get)]
    cycles: usize,
    /// gap_certified, plateau or max_cycles.
    #[pyo3(get)]
    stop_reason: String,
    /// Dual objective at each cycle boundary (length cycles + 1).
    #[pyo3(get)]
    boundary_f: Vec<f64>,
    /// Certified bound on max_i ||x_i - x*||; None without a normalized
    /// certificate.
    #[pyo3(get)]
    certified_gap: Option<f64>,
    /// Measured max_i ||x_i - x*||; None without a certificate.
    #[pyo3(get)]
    distance_to_optimum: Option<f64>,
    /// Per-cycle contraction factor fitted to the final half of the run.
    #[pyo3(get)]
    rate: Option<f64>,
    #[pyo3(get)]
    r_squared: Option<f64>,
    #[pyo3(get)]
    warnings: Vec<String>,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult(cycles={}, stop_reason='{}', final_f={:.3e})",
            self.cycles, self.stop_reason, self.final_f
        )
    }
}

/// Runs the block-coordinate solver. Policies: cyclic_v_first,
/// singleton_cyclic, edge_coloring_parallel, random_coverage.
#[pyfunction]
#[pyo3(signature = (instance, policy = "cyclic_v_first", seed = 0, max_cycles = 10_000, gap_eps = 1e-8, debug = false))]
fn run(
    instance: &PyInstance,
    policy: &str,
    seed: u64,
    max_cycles: usize,
    gap_eps: f64,
    debug: bool,
) -> PyResult<PyRunResult> {
    let policy = SchedulePolicy::from_str(policy).map_err(value_err)?;
    let config = RunConfig {
        policy,
        schedule_seed: seed,
        stop: StopRule { max_cycles, gap_eps, ..Default::default() },
        debug,
    };
    let out = run_with_config(&instance.inner, &config).map_err(runtime_err)?;

    let boundary: Vec<_> = out.trace.boundary_records().collect();
    let fit = fit_rate(&out.trace, 0.5).ok();
    Ok(PyRunResult {
        points: out.state.primal_images().to_vec(),
        final_f: out.trace.final_f().unwrap_or(f64::NAN),
        cycles: out.trace.meta.cycles,
        stop_reason: out
            .trace
            .meta
            .stop_reason
            .map(|s| s.name().to_string())
            .unwrap_or_default(),
        boundary_f: boundary.iter().map(|r| r.f).collect(),
        certified_gap: gap_bound(&out.state, &instance.inner).ok(),
        distance_to_optimum: boundary.last().and_then(|r| r.dist_max),
        rate: fit.as_ref().map(|f| f.rate),
        r_squared: fit.as_ref().map(|f| f.r_squared),
        warnings: out.trace.meta.warnings.unwrap_or_default(),
    })
}

/// Centralized Dykstra solution of the same projection problem.
#[pyclass(name = "OracleResult", module = "dykstra_net_py")]
struct PyOracleResult {
    #[pyo3(get)]
    point: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    displacement: f64,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    corrections: Vec<Vec<f64>>,
}

#[pymethods]
impl PyOracleResult {
    fn __repr__(&self) -> String {
        format!(
            "OracleResult(iterations={}, converged={}, displacement={:.3e})",
            self.iterations, self.converged, self.displacement
        )
    }
}

/// Projects the instance anchor onto the intersection of all its sets with
/// classical cyclic Dykstra.
#[pyfunction]
#[pyo3(signature = (instance, tol = 1e-10, max_iter = 100_000))]
fn oracle(instance: &PyInstance, tol: f64, max_iter: usize) -> PyResult<PyOracleResult> {
    let settings = OracleSettings { tol, max_iter, ..Default::default() };
    let result = centralized_dykstra(&instance.inner.sets, &instance.inner.anchor, &settings)
        .map_err(runtime_err)?;
    Ok(PyOracleResult {
        point: result.point,
        iterations: result.iterations,
        displacement: result.displacement,
        converged: result.converged,
        corrections: result.corrections,
    })
}

/// Scores a candidate solution by probing feasible directions around it:
/// 0 means no sampled direction improves on the candidate.
#[pyfunction]
#[pyo3(signature = (instance, point, samples = 64, seed = 0))]
fn certify(instance: &PyInstance, point: Vec<f64>, samples: usize, seed: u64) -> PyResult<f64> {
    let settings = OracleSettings { n_samples: samples, seed, ..Default::default() };
    certify_point(&instance.inner.sets, &instance.inner.anchor, &point, &settings)
        .map_err(runtime_err)
}

/// Collapses per-vertex anchors to their mean; returns (mean, shift) where
/// shift is the constant making both objectives equal.
#[pyfunction]
fn reduce_anchors(anchors: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, f64)> {
    instances::reduce_anchors(&anchors).map_err(value_err)
}

#[pymodule]
fn dykstra_net_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyOracleResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(reduce_anchors, m)?)?;
    Ok(())
}
