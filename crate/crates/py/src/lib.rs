//! Python bindings over the core toolkit.
//!
//! Thin wrappers: every class holds the core value and every method
//! defers to the library, so Python sees exactly the behavior of the
//! CLI and the agent tools. Library errors surface as ValueError with
//! their display text.

use causal_agent::ci;
use causal_agent::dml;
use causal_agent::edge;
use causal_agent::graph::CausalGraph;
use causal_agent::pc;
use causal_agent::scm::{self, MechanismFamily, Scm};
use causal_agent::tabular::DataTable;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: causal_agent::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_family(name: &str) -> PyResult<MechanismFamily> {
    match name.to_lowercase().as_str() {
        "linear" => Ok(MechanismFamily::Linear),
        "tanh" => Ok(MechanismFamily::Tanh),
        other => Err(PyValueError::new_err(format!(
            "unknown mechanism family '{other}'; expected 'linear' or 'tanh'"
        ))),
    }
}

/// Numeric table with named columns.
#[pyclass(name = "DataTable")]
struct PyDataTable {
    inner: DataTable,
}

#[pymethods]
impl PyDataTable {
    /// Build from one data vector per column, all the same length.
    #[new]
    fn new(name: &str, columns: Vec<String>, data: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyDataTable {
            inner: DataTable::from_columns(name, columns, data).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        Ok(PyDataTable {
            inner: DataTable::load_csv(path).map_err(err)?,
        })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        self.inner.save_csv(path).map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.columns().to_vec()
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.column(name).map_err(err)?.to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "DataTable(name={:?}, columns={:?}, n_rows={})",
            self.inner.name(),
            self.inner.columns(),
            self.inner.n_rows()
        )
    }
}

/// Partially directed causal graph.
#[pyclass(name = "CausalGraph")]
struct PyCausalGraph {
    inner: CausalGraph,
}

#[pymethods]
impl PyCausalGraph {
    #[new]
    #[pyo3(signature = (nodes, directed=Vec::new(), undirected=Vec::new()))]
    fn new(
        nodes: Vec<String>,
        directed: Vec<(String, String)>,
        undirected: Vec<(String, String)>,
    ) -> PyResult<Self> {
        let mut g = CausalGraph::new(nodes).map_err(err)?;
        for (f, t) in &directed {
            g.add_directed_edge(f, t).map_err(err)?;
        }
        for (a, b) in &undirected {
            g.add_undirected_edge(a, b).map_err(err)?;
        }
        Ok(PyCausalGraph { inner: g })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyCausalGraph {
            inner: CausalGraph::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.nodes().to_vec()
    }

    #[getter]
    fn directed_edges(&self) -> Vec<(String, String)> {
        self.inner
            .directed_edges()
            .map(|(f, t)| (f.to_string(), t.to_string()))
            .collect()
    }

    #[getter]
    fn undirected_edges(&self) -> Vec<(String, String)> {
        self.inner
            .undirected_edges()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[pyo3(signature = (x, y, z=Vec::new()))]
    fn d_separated(&self, x: &str, y: &str, z: Vec<String>) -> PyResult<bool> {
        self.inner.d_separated(x, y, &z).map_err(err)
    }

    /// Completed partially directed graph of this DAG's equivalence
    /// class.
    fn cpdag_of_dag(&self) -> PyResult<Self> {
        Ok(PyCausalGraph {
            inner: self.inner.cpdag_of_dag().map_err(err)?,
        })
    }

    /// Structural hamming distance to another graph.
    fn shd(&self, other: &PyCausalGraph) -> PyResult<usize> {
        causal_agent::graph::shd(&self.inner, &other.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "CausalGraph(nodes={:?}, directed={}, undirected={})",
            self.inner.nodes(),
            self.inner.directed_edge_count(),
            self.inner.undirected_edge_count()
        )
    }
}

/// Outcome of one conditional independence test.
#[pyclass(name = "CiResult")]
struct PyCiResult {
    #[pyo3(get)]
    partial_correlation: f64,
    #[pyo3(get)]
    p_value: f64,
    #[pyo3(get)]
    independent: bool,
    #[pyo3(get)]
    observation: String,
}

#[pymethods]
impl PyCiResult {
    fn __repr__(&self) -> String {
        format!(
            "CiResult(partial_correlation={}, p_value={}, independent={})",
            self.partial_correlation, self.p_value, self.independent
        )
    }
}

/// Verdict with witnesses and a narrative sentence.
#[pyclass(name = "EdgeVerdict")]
struct PyEdgeVerdict {
    #[pyo3(get)]
    verdict: String,
    #[pyo3(get)]
    witnesses: Vec<String>,
    #[pyo3(get)]
    narrative: String,
}

#[pymethods]
impl PyEdgeVerdict {
    fn __repr__(&self) -> String {
        format!("EdgeVerdict(verdict={:?}, witnesses={:?})", self.verdict, self.witnesses)
    }
}

impl From<edge::EdgeVerdict> for PyEdgeVerdict {
    fn from(v: edge::EdgeVerdict) -> Self {
        PyEdgeVerdict {
            verdict: v.verdict.to_string(),
            witnesses: v.witnesses,
            narrative: v.narrative,
        }
    }
}

/// Treatment-effect estimate for a contrast.
#[pyclass(name = "AteEstimate")]
struct PyAteEstimate {
    #[pyo3(get)]
    ate: f64,
    #[pyo3(get)]
    theta0: f64,
    #[pyo3(get)]
    theta_x: Vec<f64>,
    #[pyo3(get)]
    t0: f64,
    #[pyo3(get)]
    t1: f64,
    #[pyo3(get)]
    n_used: usize,
}

#[pymethods]
impl PyAteEstimate {
    fn __repr__(&self) -> String {
        format!("AteEstimate(ate={}, t0={}, t1={})", self.ate, self.t0, self.t1)
    }
}

/// Fisher-Z conditional independence test of x and y given z.
#[pyfunction]
#[pyo3(signature = (table, x, y, z=Vec::new(), alpha=0.05))]
fn fisher_z(table: &PyDataTable, x: &str, y: &str, z: Vec<String>, alpha: f64) -> PyResult<PyCiResult> {
    let r = ci::fisher_z_test(&table.inner, x, y, &z, alpha).map_err(err)?;
    Ok(PyCiResult {
        partial_correlation: r.partial_correlation,
        p_value: r.p_value,
        independent: r.independent,
        observation: ci::render_observation(&r),
    })
}

/// Constraint-based discovery over all columns.
#[pyfunction]
#[pyo3(signature = (table, alpha=0.05))]
fn run_pc(table: &PyDataTable, alpha: f64) -> PyResult<PyCausalGraph> {
    Ok(PyCausalGraph {
        inner: pc::run_pc(&table.inner, alpha).map_err(err)?.graph,
    })
}

/// Constraint-based discovery restricted to the named columns.
#[pyfunction]
#[pyo3(signature = (table, columns, alpha=0.05))]
fn run_pc_partial(table: &PyDataTable, columns: Vec<String>, alpha: f64) -> PyResult<PyCausalGraph> {
    Ok(PyCausalGraph {
        inner: pc::run_pc_partial(&table.inner, &columns, alpha)
            .map_err(err)?
            .graph,
    })
}

/// Whether x directly causes y in every consistent extension.
#[pyfunction]
fn determine_direct_cause(graph: &PyCausalGraph, x: &str, y: &str) -> PyResult<PyEdgeVerdict> {
    Ok(edge::determine_direct_cause(&graph.inner, x, y).map_err(err)?.into())
}

/// Whether x and y share a directed common child in every consistent
/// extension.
#[pyfunction]
fn determine_collider(graph: &PyCausalGraph, x: &str, y: &str) -> PyResult<PyEdgeVerdict> {
    Ok(edge::determine_collider(&graph.inner, x, y).map_err(err)?.into())
}

/// Whether an open backdoor path joins x and y in every consistent
/// extension.
#[pyfunction]
fn determine_confounder(graph: &PyCausalGraph, x: &str, y: &str) -> PyResult<PyEdgeVerdict> {
    Ok(edge::determine_confounder(&graph.inner, x, y).map_err(err)?.into())
}

/// Double/debiased machine-learning estimate of the average treatment
/// effect of moving the treatment from t0 to t1.
#[pyfunction]
#[pyo3(signature = (table, outcome, treatment, covariates=Vec::new(), t0=0.0, t1=1.0))]
fn estimate_ate(
    table: &PyDataTable,
    outcome: &str,
    treatment: &str,
    covariates: Vec<String>,
    t0: f64,
    t1: f64,
) -> PyResult<PyAteEstimate> {
    let cfg = dml::DmlConfig::new(outcome, treatment, covariates, t0, t1);
    let e = dml::estimate_ate(&table.inner, &cfg).map_err(err)?;
    Ok(PyAteEstimate {
        ate: e.ate,
        theta0: e.theta0,
        theta_x: e.theta_x,
        t0: e.t0,
        t1: e.t1,
        n_used: e.n_used,
    })
}

/// Uniform random DAG with the requested edge count.
#[pyfunction]
fn random_dag(nodes: Vec<String>, edge_count: usize, seed: u64) -> PyResult<PyCausalGraph> {
    Ok(PyCausalGraph {
        inner: scm::random_dag(&nodes, edge_count, seed).map_err(err)?,
    })
}

/// Sample a table from a structural causal model built over the graph.
#[pyfunction]
#[pyo3(signature = (graph, family="tanh", sigma=0.5, scm_seed=0, name="data", rows=1000, sample_seed=0))]
#[allow(clippy::too_many_arguments)]
fn sample_table(
    graph: &PyCausalGraph,
    family: &str,
    sigma: f64,
    scm_seed: u64,
    name: &str,
    rows: usize,
    sample_seed: u64,
) -> PyResult<PyDataTable> {
    let scm = Scm::from_dag(&graph.inner, parse_family(family)?, sigma, scm_seed).map_err(err)?;
    Ok(PyDataTable {
        inner: scm.sample_table(name, rows, sample_seed).map_err(err)?,
    })
}

/// Monte-Carlo interventional contrast on a structural causal model
/// built over the graph; the ground truth an effect estimate chases.
#[pyfunction]
#[pyo3(signature = (graph, outcome, treatment, family="linear", sigma=0.5, scm_seed=0, t0=0.0, t1=1.0, draws=100_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn interventional_ate(
    graph: &PyCausalGraph,
    outcome: &str,
    treatment: &str,
    family: &str,
    sigma: f64,
    scm_seed: u64,
    t0: f64,
    t1: f64,
    draws: usize,
    seed: u64,
) -> PyResult<f64> {
    let scm = Scm::from_dag(&graph.inner, parse_family(family)?, sigma, scm_seed).map_err(err)?;
    scm.interventional_ate(outcome, treatment, t0, t1, draws, seed)
        .map_err(err)
}

#[pymodule]
fn causal_agent_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataTable>()?;
    m.add_class::<PyCausalGraph>()?;
    m.add_class::<PyCiResult>()?;
    m.add_class::<PyEdgeVerdict>()?;
    m.add_class::<PyAteEstimate>()?;
    m.add_function(wrap_pyfunction!(fisher_z, m)?)?;
    m.add_function(wrap_pyfunction!(run_pc, m)?)?;
    m.add_function(wrap_pyfunction!(run_pc_partial, m)?)?;
    m.add_function(wrap_pyfunction!(determine_direct_cause, m)?)?;
    m.add_function(wrap_pyfunction!(determine_collider, m)?)?;
    m.add_function(wrap_pyfunction!(determine_confounder, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_ate, m)?)?;
    m.add_function(wrap_pyfunction!(random_dag, m)?)?;
    m.add_function(wrap_pyfunction!(sample_table, m)?)?;
    m.add_function(wrap_pyfunction!(interventional_ate, m)?)?;
    Ok(())
}
