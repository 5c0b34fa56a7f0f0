//! Python bindings: an in-process session over a candidate matrix.

use std::sync::Arc;

use nnn_core::normalization::MethodParams;
use nnn_core::{
    apply, compute_bias, ApplyOptions, BiasVector, EmbeddingMatrix, Error, NormalizationSpec,
    References, VectorIndex,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(nnnorm, NnnError, PyException);
create_exception!(nnnorm, ShapeError, NnnError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Shape(_) | Error::RaggedRows { .. } => ShapeError::new_err(e.to_string()),
        other => NnnError::new_err(other.to_string()),
    }
}

/// Copies a list of rows into a matrix. An empty list gives a 0-row matrix of
/// `fallback_dim` columns.
fn matrix(rows: Vec<Vec<f32>>, normalize: bool, fallback_dim: usize) -> PyResult<EmbeddingMatrix> {
    let Some(first) = rows.first() else {
        return EmbeddingMatrix::empty(fallback_dim.max(1)).map_err(to_py);
    };
    let dim = first.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
        return Err(ShapeError::new_err(format!(
            "ShapeError: row {i} has {} values, expected {dim}",
            r.len()
        )));
    }
    let m = EmbeddingMatrix::from_rows(&rows, dim, false).map_err(to_py)?;
    if normalize {
        m.to_normalized().map_err(to_py)
    } else {
        Ok(m)
    }
}

fn spec_from_record(record: &Bound<'_, PyDict>) -> PyResult<NormalizationSpec> {
    let method: String = match record.get_item("method")? {
        Some(v) => v.extract()?,
        None => "none".to_string(),
    };
    let f64_of = |key: &str| -> PyResult<Option<f64>> {
        record.get_item(key)?.map(|v| v.extract()).transpose()
    };
    let usize_of = |key: &str| -> PyResult<Option<usize>> {
        record.get_item(key)?.map(|v| v.extract()).transpose()
    };
    NormalizationSpec::from_params(
        &method,
        MethodParams {
            alpha: f64_of("alpha")?,
            k: usize_of("k")?,
            beta1: f64_of("beta1")?,
            beta2: f64_of("beta2")?,
            activation_threshold: usize_of("activation_threshold")?,
        },
    )
    .map_err(to_py)
}

/// Candidate matrix plus an optional cached bias. Not shareable across threads.
#[pyclass(unsendable, module = "nnnorm")]
pub struct Session {
    candidates: Arc<EmbeddingMatrix>,
    index: VectorIndex,
    bias: Option<BiasVector>,
}

#[pymethods]
impl Session {
    #[staticmethod]
    #[pyo3(signature = (candidates, normalize = true))]
    fn from_arrays(candidates: Vec<Vec<f32>>, normalize: bool) -> PyResult<Self> {
        let m = Arc::new(matrix(candidates, normalize, 1)?);
        Ok(Session {
            index: VectorIndex::build_exact(m.clone()),
            candidates: m,
            bias: None,
        })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.candidates.rows()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.candidates.dim()
    }

    /// Exact NNN bias against `ref_queries`; cached on the session for `retrieve`.
    fn compute_bias(&mut self, ref_queries: Vec<Vec<f32>>, alpha: f64, k: usize) -> PyResult<Vec<f32>> {
        let refs = Arc::new(matrix(ref_queries, false, self.candidates.dim())?);
        let index = VectorIndex::build_exact(refs.clone());
        let bias = compute_bias(&self.candidates, &refs, alpha, k, &index, 1).map_err(to_py)?;
        let values = bias.values().to_vec();
        self.bias = Some(bias);
        Ok(values)
    }

    /// Per-query lists of `{"cand": int, "score": float}` records.
    #[pyo3(signature = (queries, method, depth = 10, ref_queries = None, ref_candidates = None))]
    fn retrieve<'py>(
        &self,
        py: Python<'py>,
        queries: Vec<Vec<f32>>,
        method: &Bound<'py, PyDict>,
        depth: usize,
        ref_queries: Option<Vec<Vec<f32>>>,
        ref_candidates: Option<Vec<Vec<f32>>>,
    ) -> PyResult<Bound<'py, PyList>> {
        let spec = spec_from_record(method)?;
        let dim = self.candidates.dim();
        let queries = matrix(queries, false, dim)?;
        let rq = ref_queries.map(|r| matrix(r, false, dim)).transpose()?;
        let rc = ref_candidates.map(|r| matrix(r, false, dim)).transpose()?;
        // A cached bias is used only when it was computed with the requested settings.
        let bias = match (&spec, &self.bias) {
            (NormalizationSpec::Nnn { alpha, k }, Some(b)) if rq.is_none() && b.alpha() == *alpha && b.k() <= *k => {
                Some(b.clone())
            }
            _ => None,
        };
        let table = apply(
            &spec,
            &queries,
            &self.index,
            References {
                queries: rq.as_ref(),
                candidates: rc.as_ref(),
            },
            &ApplyOptions {
                depth,
                bias,
                ..ApplyOptions::default()
            },
        )
        .map_err(to_py)?;
        let out = PyList::empty(py);
        for hits in table.iter() {
            let row = PyList::empty(py);
            for h in hits {
                let d = PyDict::new(py);
                d.set_item("cand", h.candidate)?;
                d.set_item("score", h.score)?;
                row.append(d)?;
            }
            out.append(row)?;
        }
        Ok(out)
    }
}

#[pymodule]
fn nnnorm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Session>()?;
    m.add("NnnError", m.py().get_type::<NnnError>())?;
    m.add("ShapeError", m.py().get_type::<ShapeError>())?;
    Ok(())
}
