//! Python bindings: corpus generation, training, zero-shot inference, the
//! acyclicity constraint, the single-task baseline and the core metrics.
//! Matrices cross the boundary as row-major nested lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use adag_core::datagen::{make_corpus, CorpusSpec, TopologicalOrder};
use adag_core::error::Error;
use adag_core::matrix::Matrix;
use adag_core::metrics::BinaryGraph;
use adag_core::model::AttentionParams;
use adag_core::notears::SingleTaskConfig;
use adag_core::rng::seeded_rng;
use adag_core::trainer::TrainConfig;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Format { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("matrix must be non-empty"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows in matrix"));
    }
    Matrix::from_vec(rows.len(), cols, rows.into_iter().flatten().collect()).map_err(py_err)
}

fn to_lists(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Generate a synthetic multi-domain corpus directory.
#[pyfunction]
#[pyo3(signature = (dir, setting, d, n, m, degree=1, noise="gaussian-equal-variance", seed=0, order=None))]
#[allow(clippy::too_many_arguments)]
fn generate_corpus(
    dir: &str,
    setting: &str,
    d: usize,
    n: usize,
    m: usize,
    degree: usize,
    noise: &str,
    seed: u64,
    order: Option<Vec<usize>>,
) -> PyResult<()> {
    let spec = CorpusSpec {
        setting: setting.parse().map_err(py_err)?,
        d,
        n,
        m,
        degree,
        noise_kind: noise.parse().map_err(py_err)?,
        master_seed: seed,
        fixed_order: order.map(TopologicalOrder::new).transpose().map_err(py_err)?,
    };
    let corpus = make_corpus(&spec).map_err(py_err)?;
    adag_core::corpus_io::save_corpus(&corpus, std::path::Path::new(dir)).map_err(py_err)
}

/// Draw one observation block from a linear SEM.
#[pyfunction]
#[pyo3(signature = (weights, n, noise="gaussian-equal-variance", seed=0))]
fn simulate_sem(
    weights: Vec<Vec<f64>>,
    n: usize,
    noise: &str,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let a = adag_core::datagen::WeightedAdjacency::new(to_matrix(weights)?).map_err(py_err)?;
    let x = adag_core::datagen::simulate_sem(
        &a,
        n,
        noise.parse().map_err(py_err)?,
        &mut seeded_rng(seed),
    );
    Ok(to_lists(&x))
}

/// Acyclicity constraint value and gradient: tr(e^{A∘A}) − d.
#[pyfunction]
fn acyclicity(a: Vec<Vec<f64>>) -> PyResult<(f64, Vec<Vec<f64>>)> {
    let result = adag_core::expm::acyclicity(&to_matrix(a)?).map_err(py_err)?;
    Ok((result.value, to_lists(&result.grad)))
}

/// Train the kernel map on a corpus directory; returns True if the
/// constraint converged. Writes theta.ckpt/state.ckpt into out_dir.
#[pyfunction]
#[pyo3(signature = (corpus_dir, out_dir, epochs_first=None, epochs_rest=None, max_outer=None,
                    batch_size=None, seed=None, k=None, layers=None, threads=None))]
#[allow(clippy::too_many_arguments)]
fn train(
    corpus_dir: &str,
    out_dir: &str,
    epochs_first: Option<usize>,
    epochs_rest: Option<usize>,
    max_outer: Option<usize>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    k: Option<usize>,
    layers: Option<usize>,
    threads: Option<usize>,
) -> PyResult<bool> {
    let corpus = adag_core::corpus_io::load_corpus(std::path::Path::new(corpus_dir)).map_err(py_err)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        epochs_first: epochs_first.unwrap_or(defaults.epochs_first),
        epochs_rest: epochs_rest.unwrap_or(defaults.epochs_rest),
        max_outer: max_outer.unwrap_or(defaults.max_outer),
        batch_size: batch_size.unwrap_or(defaults.batch_size),
        seed: seed.unwrap_or(defaults.seed),
        k,
        layers,
        threads: threads.unwrap_or(1),
        ..defaults
    };
    let outcome = adag_core::trainer::train(&corpus, &cfg).map_err(py_err)?;
    outcome
        .state
        .save(std::path::Path::new(out_dir))
        .map_err(py_err)?;
    Ok(outcome.converged)
}

/// A trained kernel map bound to one (d, n, k, L).
#[pyclass]
struct Model {
    params: AttentionParams,
}

#[pymethods]
impl Model {
    /// Load a theta.ckpt file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        let params = AttentionParams::load(std::path::Path::new(path)).map_err(py_err)?;
        Ok(Model { params })
    }

    /// (d, n, k, L) the checkpoint is bound to.
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.params.dims;
        (d.d, d.n, d.k, d.l)
    }

    /// Zero-shot adjacency estimate for a d×n observation block.
    fn infer(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let estimate = adag_core::eval::infer(&to_matrix(x)?, &self.params).map_err(py_err)?;
        Ok(to_lists(&estimate))
    }
}

/// Edges of |a| > omega (strict), diagonal ignored.
#[pyfunction]
#[pyo3(signature = (a, omega=0.3))]
fn threshold_edges(a: Vec<Vec<f64>>, omega: f64) -> PyResult<Vec<(usize, usize)>> {
    let graph = adag_core::metrics::threshold_graph(&to_matrix(a)?, omega).map_err(py_err)?;
    Ok(graph.edges().collect())
}

/// Structural Hamming distance between two edge lists over d variables.
#[pyfunction]
fn shd(d: usize, edges1: Vec<(usize, usize)>, edges2: Vec<(usize, usize)>) -> PyResult<usize> {
    let g1 = BinaryGraph::new(d, edges1).map_err(py_err)?;
    let g2 = BinaryGraph::new(d, edges2).map_err(py_err)?;
    adag_core::metrics::shd(&g1, &g2).map_err(py_err)
}

/// Relative Frobenius error; None when the ground truth has zero norm.
#[pyfunction]
fn relative_error(a_hat: Vec<Vec<f64>>, a_gt: Vec<Vec<f64>>) -> PyResult<Option<f64>> {
    adag_core::metrics::relative_error(&to_matrix(a_hat)?, &to_matrix(a_gt)?).map_err(py_err)
}

/// Single-task fit of one observation block; returns the raw weighted
/// estimate and whether the acyclicity constraint converged.
#[pyfunction]
#[pyo3(signature = (x, lambda1=None, steps=None, max_outer=None))]
fn notears_fit(
    x: Vec<Vec<f64>>,
    lambda1: Option<f64>,
    steps: Option<usize>,
    max_outer: Option<usize>,
) -> PyResult<(Vec<Vec<f64>>, bool)> {
    let defaults = SingleTaskConfig::default();
    let cfg = SingleTaskConfig {
        lambda1: lambda1.unwrap_or(defaults.lambda1),
        steps: steps.unwrap_or(defaults.steps),
        max_outer: max_outer.unwrap_or(defaults.max_outer),
        ..defaults
    };
    let fit = adag_core::notears::notears_fit(&to_matrix(x)?, &cfg).map_err(py_err)?;
    Ok((to_lists(&fit.weights), fit.converged))
}

#[pymodule]
fn adag_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_sem, m)?)?;
    m.add_function(wrap_pyfunction!(acyclicity, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_edges, m)?)?;
    m.add_function(wrap_pyfunction!(shd, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(notears_fit, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
