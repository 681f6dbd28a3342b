//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use specpow::iterations::{self, IterationPlan, Scheme};
use specpow::optimizers::{self, DirectionKind, SgdNorm, TruncationNorm};
use specpow::{kaon, linalg, remez, Mat, Precision, SpecError};

fn to_py(e: SpecError) -> PyErr {
    match e {
        SpecError::Config { .. } | SpecError::InvalidPlan(_) | SpecError::InvalidSchedule(_) | SpecError::Shape(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_mat(rows: Vec<Vec<f64>>) -> PyResult<Mat> {
    Mat::from_rows(&rows).map_err(to_py)
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// `(GGᵀ)^{-a/b} G`. Returns the output rows and the cost ledger.
#[pyfunction]
#[pyo3(signature = (g, a, b, scheme="coupled-chol", steps=10, precision="f64", epsilon=0.0))]
#[allow(clippy::too_many_arguments)]
fn fractional_power<'py>(
    py: Python<'py>,
    g: Vec<Vec<f64>>,
    a: u32,
    b: u32,
    scheme: &str,
    steps: usize,
    precision: &str,
    epsilon: f64,
) -> PyResult<(Vec<Vec<f64>>, Bound<'py, PyDict>)> {
    let g = to_mat(g)?;
    let scheme: Scheme = scheme.parse().map_err(to_py)?;
    let precision: Precision = precision.parse().map_err(to_py)?;
    let plan = IterationPlan::new(a, b, scheme, steps).map_err(to_py)?.with_epsilon(epsilon);
    let res = py.detach(|| iterations::run(&g, &plan, precision)).map_err(to_py)?;
    if res.diverged {
        return Err(to_py(SpecError::NonFinite));
    }
    let ledger = PyDict::new(py);
    ledger.set_item("g_mm", res.ledger.g_mm)?;
    ledger.set_item("s_mm", res.ledger.s_mm)?;
    ledger.set_item("qr", res.ledger.qr)?;
    Ok((to_rows(&res.output), ledger))
}

/// Update direction for `kind` in muon, kaon, freon, freon-c1, tsgd, sgd.
/// Returns the direction rows and `⟨G, D⟩`.
#[pyfunction]
#[pyo3(signature = (g, kind, steps=5, a=1, b=2, p_frac=0.0))]
fn direction(
    g: Vec<Vec<f64>>,
    kind: &str,
    steps: usize,
    a: u32,
    b: u32,
    p_frac: f64,
) -> PyResult<(Vec<Vec<f64>>, f64)> {
    let g = to_mat(g)?;
    let kind = match kind {
        "muon" => DirectionKind::Muon { steps },
        "kaon" => DirectionKind::Kaon { steps },
        "freon" => DirectionKind::Freon { a, b, steps, scheme: Scheme::CoupledChol },
        "freon-c1" => DirectionKind::FreonC1 { steps },
        "tsgd" => DirectionKind::Tsgd { p_frac, norm: TruncationNorm::Frobenius },
        "sgd" => DirectionKind::Sgd { norm: SgdNorm::Spectral },
        other => return Err(PyValueError::new_err(format!("unknown direction kind {other}"))),
    };
    let dir = optimizers::direction(&g, &kind).map_err(to_py)?;
    Ok((to_rows(&dir.d), dir.dual_scale))
}

#[pyfunction]
fn singular_values(g: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    linalg::singular_values(&to_mat(g)?).map_err(to_py)
}

/// Rational schedule for `b` with the default cushion, as JSON.
#[pyfunction]
#[pyo3(signature = (b, steps=5, l0=None))]
fn fit_schedule(b: u32, steps: usize, l0: Option<f64>) -> PyResult<String> {
    let l0 = l0.unwrap_or_else(|| remez::lower_bound_for(b));
    let sched = remez::fit_with_default_cushion(l0, steps, b).map_err(to_py)?;
    serde_json::to_string(&sched).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
#[pyo3(signature = (x, lam=kaon::DEFAULT_LAMBDA))]
fn kaon_map(x: f64, lam: f64) -> f64 {
    kaon::scalar_map(x, lam)
}

#[pymodule]
fn specpow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(fractional_power, m)?)?;
    m.add_function(wrap_pyfunction!(direction, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(fit_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(kaon_map, m)?)?;
    Ok(())
}
