//! Python bindings: JSON text in, JSON text out.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use reg_core::bridge::{self, BridgeHandle};

fn to_py(e: reg_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Seeded scorer for one configuration. Not meant to be shared across threads.
#[pyclass(name = "Scorer", unsendable)]
struct PyScorer {
    inner: BridgeHandle,
}

#[pymethods]
impl PyScorer {
    #[new]
    #[pyo3(signature = (config_json = "{}"))]
    fn new(config_json: &str) -> PyResult<Self> {
        Ok(PyScorer {
            inner: BridgeHandle::new(config_json).map_err(to_py)?,
        })
    }

    fn score(&self, reg_json: &str) -> PyResult<String> {
        self.inner.score(reg_json).map_err(to_py)
    }
}

/// REG document JSON for a PENMAN string and an annotation JSON object.
#[pyfunction]
fn build_reg(penman: &str, annotation_json: &str) -> PyResult<String> {
    bridge::bridge_build_reg(penman, annotation_json).map_err(to_py)
}

/// Scores a REG document; returns a JSON object with scores, distribution and trace.
#[pyfunction]
#[pyo3(signature = (reg_json, config_json = "{}"))]
fn score(reg_json: &str, config_json: &str) -> PyResult<String> {
    bridge::bridge_score(reg_json, config_json).map_err(to_py)
}

#[pymodule]
fn regpy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", bridge::VERSION)?;
    m.add_class::<PyScorer>()?;
    m.add_function(wrap_pyfunction!(build_reg, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    Ok(())
}
