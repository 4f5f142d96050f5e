//! Python bindings: an embedded cluster with the query, admin and loader
//! operations.

use std::path::PathBuf;

use polygate_core::config::ClusterConfig;
use polygate_core::csv::render_csv;
use polygate_core::gen::GenSpec;
use polygate_core::loader::{load, Placement};
use polygate_core::{Error, Value};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(polygate, PolygateError, PyException, "Any error raised by the polystore.");
create_exception!(polygate, QueryParseError, PolygateError, "Query text did not parse.");
create_exception!(polygate, EngineUnavailableError, PolygateError, "An engine needed by the query is down.");

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match err.root() {
        Error::Parse(_) => QueryParseError::new_err(msg),
        Error::EngineUnavailable { .. } | Error::NoUpEngineForIsland { .. } => EngineUnavailableError::new_err(msg),
        _ => PolygateError::new_err(msg),
    }
}

fn cell<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Int(i) => i.into_pyobject(py)?.into_any(),
        Value::Float(f) => f.into_pyobject(py)?.into_any(),
        Value::Text(s) => s.into_pyobject(py)?.into_any(),
    })
}

/// An embedded polystore cluster.
#[pyclass(frozen, module = "polygate")]
struct Cluster {
    inner: polygate_core::Cluster,
}

#[pymethods]
impl Cluster {
    /// The three-engine demo cluster (rel1, arr1, txt1). With `data_dir`
    /// each engine snapshots under `<data_dir>/<name>`.
    #[new]
    #[pyo3(signature = (data_dir=None))]
    fn new(data_dir: Option<PathBuf>) -> PyResult<Self> {
        let cfg = ClusterConfig::demo(data_dir.as_deref());
        Ok(Cluster {
            inner: polygate_core::Cluster::start(&cfg).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let cfg = ClusterConfig::load(&path).map_err(to_py)?;
        Ok(Cluster {
            inner: polygate_core::Cluster::start(&cfg).map_err(to_py)?,
        })
    }

    /// Runs a query; returns `{"columns": [...], "types": [...], "rows": [[...]]}`.
    fn query<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
        let rs = py.detach(|| self.inner.query(text)).map_err(to_py)?;
        let out = PyDict::new(py);
        let fields = rs.schema.fields();
        out.set_item("columns", fields.iter().map(|f| f.name.as_str()).collect::<Vec<_>>())?;
        out.set_item("types", fields.iter().map(|f| f.kind.to_string()).collect::<Vec<_>>())?;
        let rows = PyList::empty(py);
        for r in &rs.rows {
            let cells = r.iter().map(|v| cell(py, v)).collect::<PyResult<Vec<_>>>()?;
            rows.append(PyList::new(py, cells)?)?;
        }
        out.set_item("rows", rows)?;
        Ok(out)
    }

    /// Runs a query and returns the CSV text the gateway would send.
    fn query_csv(&self, py: Python<'_>, text: &str) -> PyResult<String> {
        let rs = py.detach(|| self.inner.query(text)).map_err(to_py)?;
        Ok(render_csv(&rs))
    }

    /// The plan as a JSON string.
    fn explain(&self, text: &str) -> PyResult<String> {
        Ok(self.inner.explain(text).map_err(to_py)?.to_string())
    }

    /// Generates and loads the synthetic dataset. Returns
    /// `[(object, engine, count), ...]`.
    #[pyo3(signature = (seed=42, patients=100, len=1000, notes=300, replace=false))]
    fn load(
        &self,
        py: Python<'_>,
        seed: i64,
        patients: i64,
        len: i64,
        notes: i64,
        replace: bool,
    ) -> PyResult<Vec<(String, String, usize)>> {
        let spec = GenSpec {
            seed,
            n_patients: patients,
            waveform_len: len,
            n_notes: notes,
        };
        let summary = py
            .detach(|| load(&self.inner, &spec, &Placement::single(&self.inner)?, replace))
            .map_err(to_py)?;
        Ok(summary.objects.into_iter().map(|o| (o.name, o.engine, o.count)).collect())
    }

    /// Returns whether the engine changed state.
    fn stop_engine(&self, name: &str) -> PyResult<bool> {
        self.inner.stop_engine(name).map_err(to_py)
    }

    fn start_engine(&self, name: &str) -> PyResult<bool> {
        self.inner.start_engine(name).map_err(to_py)
    }

    /// `[(name, kind, status, objects), ...]`
    fn status(&self) -> PyResult<Vec<(String, String, String, usize)>> {
        let report = self.inner.status().map_err(to_py)?;
        Ok(report
            .engines
            .into_iter()
            .map(|e| {
                let status = if e.status == polygate_core::catalog::Status::Up { "up" } else { "down" };
                (e.name, e.kind.to_string(), status.to_string(), e.objects)
            })
            .collect())
    }

    /// Names of temporary objects still present anywhere.
    fn leftover_temps(&self) -> PyResult<Vec<String>> {
        self.inner.leftover_temps().map_err(to_py)
    }

    fn flush(&self) -> PyResult<()> {
        self.inner.flush().map_err(to_py)
    }
}

/// Parses a query and prints it back in canonical form.
#[pyfunction]
fn canonical(text: &str) -> PyResult<String> {
    polygate_core::lang::parse(text)
        .map(|q| q.to_string())
        .map_err(|e| to_py(e.into()))
}

#[pymodule]
fn polygate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Cluster>()?;
    m.add_function(wrap_pyfunction!(canonical, m)?)?;
    m.add("PolygateError", m.py().get_type::<PolygateError>())?;
    m.add("QueryParseError", m.py().get_type::<QueryParseError>())?;
    m.add("EngineUnavailableError", m.py().get_type::<EngineUnavailableError>())?;
    Ok(())
}
