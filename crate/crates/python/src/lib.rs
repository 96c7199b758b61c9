use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rqumf::experiment::{fit_preference, ExperimentConfig, Scenario};
use rqumf::{
    build_rqumf_qubo, generate_pentagon, misclassification, PreferenceMatrix, QuboParams,
    SyntheticConfig,
};

fn py_err(e: rqumf::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<u8>>) -> PyResult<PreferenceMatrix> {
    PreferenceMatrix::from_rows(&rows).map_err(py_err)
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Dense `(Q, s, offset)` of the R-QuMF QUBO for a 0/1 preference matrix.
#[pyfunction]
fn build_qubo(
    preference: Vec<Vec<u8>>,
    lambda1: f64,
    lambda2: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let p = matrix(preference)?;
    let params = QuboParams::new(lambda1, lambda2).map_err(py_err)?;
    let qubo = build_rqumf_qubo(&p, &params).map_err(py_err)?;
    let q = qubo.q();
    let rows = (0..qubo.d())
        .map(|i| (0..qubo.d()).map(|j| q[(i, j)]).collect())
        .collect();
    Ok((rows, qubo.s().iter().copied().collect(), qubo.offset()))
}

/// QUBO energy of a binary assignment.
#[pyfunction]
fn energy(preference: Vec<Vec<u8>>, lambda1: f64, lambda2: f64, w: Vec<u8>) -> PyResult<f64> {
    let p = matrix(preference)?;
    let params = QuboParams::new(lambda1, lambda2).map_err(py_err)?;
    build_rqumf_qubo(&p, &params)
        .and_then(|q| q.energy(&w))
        .map_err(py_err)
}

/// Fits a preference matrix. `method` is one of RQuMF, DeRQuMF, QuMF,
/// QuMFPostK; `solver` is "sa" or "exhaustive".
#[pyfunction]
#[pyo3(signature = (
    preference,
    lambda1,
    lambda2,
    method = "RQuMF",
    solver = "sa",
    seed = 0,
    num_samples = 100,
    subproblem_size = 40,
    baseline_lambda = 0.5,
    k = None,
))]
#[allow(clippy::too_many_arguments)]
fn fit<'py>(
    py: Python<'py>,
    preference: Vec<Vec<u8>>,
    lambda1: f64,
    lambda2: f64,
    method: &str,
    solver: &str,
    seed: u64,
    num_samples: usize,
    subproblem_size: usize,
    baseline_lambda: f64,
    k: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = matrix(preference)?;
    let mut cfg = ExperimentConfig::for_scenario(Scenario::IngestedPreference);
    cfg.params = QuboParams::new(lambda1, lambda2).map_err(py_err)?;
    cfg.solver = solver.parse().map_err(py_err)?;
    cfg.sa.num_samples = num_samples;
    cfg.decompose.subproblem_size = subproblem_size;
    cfg.baseline.lambda = baseline_lambda;
    cfg.baseline.k = k;
    cfg.seed = seed;
    cfg.validate().map_err(py_err)?;
    let method = method.parse().map_err(py_err)?;
    let fit = py
        .detach(|| fit_preference(&cfg, method, &p, None, seed))
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("method", fit.method.as_str())?;
    out.set_item("selected", fit.selected)?;
    out.set_item("labels", fit.labels)?;
    out.set_item("energy", fit.energy)?;
    out.set_item("penalty", fit.penalty)?;
    out.set_item("y", fit.y)?;
    Ok(out)
}

/// Misclassification percentage with the outlier label `0` pinned.
#[pyfunction]
fn misclassification_error(gt: Vec<usize>, est: Vec<usize>) -> PyResult<f64> {
    misclassification(&gt, &est)
        .map(|r| r.e_mis)
        .map_err(py_err)
}

type LabelledPoints = (Vec<(f64, f64)>, Vec<usize>);

/// Noisy points on a regular pentagon plus uniform outliers; returns
/// `(points, labels)`.
#[pyfunction]
#[pyo3(signature = (total_points = 30, outlier_fraction = 1.0 / 6.0, noise_sigma = 0.01, seed = 0))]
fn pentagon(
    total_points: usize,
    outlier_fraction: f64,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<LabelledPoints> {
    let cfg = SyntheticConfig {
        total_points,
        outlier_fraction,
        noise_sigma,
        seed,
        ..Default::default()
    };
    let (points, _) = generate_pentagon(&cfg).map_err(py_err)?;
    let xy = points
        .points()
        .iter()
        .map(|p| (p.coords()[0], p.coords()[1]))
        .collect();
    Ok((xy, points.gt_labels().unwrap_or_default().to_vec()))
}

#[pymodule(name = "rqumf")]
fn rqumf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(build_qubo, m)?)?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(misclassification_error, m)?)?;
    m.add_function(wrap_pyfunction!(pentagon, m)?)?;
    Ok(())
}
