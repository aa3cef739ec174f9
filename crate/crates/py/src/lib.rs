//! Python bindings: parameter schedules, block and oscillator diagnostics,
//! and full runs driven by configuration text.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cilab::driver::{init_from_target, preset_target, run, RunConfig};
use cilab::mikado::{block_norm_table, build_blocks};
use cilab::perturbation::{check_regime, choose_parameters, DeskOverrides, Mode};
use cilab::temporal::build_oscillator;
use cilab::torus_field::GridSpec;
use cilab::LabError;

fn to_py(e: LabError) -> PyErr {
    match e {
        LabError::Regime(_) | LabError::Config(_) | LabError::Parameter(_) | LabError::Grid(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Raises `ValueError` unless `1/p + 1/q > 1` and `p > 1`.
#[pyfunction]
fn regime(p: f64, q: f64) -> PyResult<()> {
    check_regime(p, q).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (dim, p, q, lam, mode = "desk", mu = None, kappa = None, sigma = None))]
#[allow(clippy::too_many_arguments)]
fn schedule<'py>(
    py: Python<'py>,
    dim: usize,
    p: f64,
    q: f64,
    lam: f64,
    mode: &str,
    mu: Option<usize>,
    kappa: Option<usize>,
    sigma: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: Mode = mode.parse().map_err(to_py)?;
    let s = choose_parameters(dim, p, q, lam, mode, DeskOverrides { mu, kappa, sigma }).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("mu", s.mu)?;
    d.set_item("kappa", s.kappa)?;
    d.set_item("sigma", s.sigma)?;
    d.set_item("gamma", s.gamma)?;
    d.set_item("p_prime", s.p_prime)?;
    d.set_item("frequency_check", s.is_valid())?;
    d.set_item("required_grid", s.required_grid())?;
    Ok(d)
}

/// Norms `‖∇^m X‖_{L^r}` of the first block, as `(part, r, m, value)` tuples.
#[pyfunction]
#[pyo3(signature = (mu, p = 2.0, n = 256, r = vec![1.0, 2.0], dim = 3))]
fn block_norms(mu: f64, p: f64, n: usize, r: Vec<f64>, dim: usize) -> PyResult<Vec<(String, f64, usize, f64)>> {
    let blocks = build_blocks(dim, mu, p, n).map_err(to_py)?;
    Ok(block_norm_table(&blocks[0], &r, &[0, 1])
        .into_iter()
        .map(|row| (row.part.name().to_string(), row.r, row.m, row.value))
        .collect())
}

/// Samples of `g_κ(σt)`, `g̃_κ(σt)`, `h_κ(σt)` and the lattice mean of `g̃g`.
#[pyfunction]
#[pyo3(signature = (kappa, sigma = 1, n_time = 1024))]
fn oscillator<'py>(py: Python<'py>, kappa: usize, sigma: usize, n_time: usize) -> PyResult<Bound<'py, PyDict>> {
    let osc = build_oscillator(kappa, sigma, n_time).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("g", osc.g().to_vec())?;
    d.set_item("g_tilde", osc.g_tilde().to_vec())?;
    d.set_item("h", osc.h().to_vec())?;
    d.set_item("pairing_mean", osc.pairing_mean())?;
    Ok(d)
}

/// Relative residual and `‖R‖_{L¹}` of the base triple built from the preset.
#[pyfunction]
#[pyo3(signature = (n_space = 8, n_time = 32, p = 2.0, dim = 3))]
fn preset_defect(n_space: usize, n_time: usize, p: f64, dim: usize) -> PyResult<(f64, f64)> {
    let g = GridSpec::new(dim, n_space, n_time).map_err(to_py)?;
    let t = init_from_target(&preset_target(g, p).map_err(to_py)?).map_err(to_py)?;
    Ok((t.residual, t.defect_norm()))
}

/// Runs the scheme from `key = value` configuration text.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::parse(text).map_err(to_py)?;
    let s = py.detach(|| run(&cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("defects", s.defects)?;
    d.set_item("deltas", s.deltas)?;
    d.set_item("theta_norms", s.theta_norms)?;
    d.set_item("residuals", s.residuals)?;
    d.set_item("deviation", s.deviation)?;
    d.set_item("nu", s.nu)?;
    d.set_item("endpoints_preserved", s.endpoints_preserved)?;
    d.set_item("support_preserved", s.support_preserved)?;
    d.set_item("notes", s.notes)?;
    d.set_item("out_dir", s.out_dir.display().to_string())?;
    Ok(d)
}

/// Adds every binding to `m`; shared by the extension entry point and tests.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(regime, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(block_norms, m)?)?;
    m.add_function(wrap_pyfunction!(oscillator, m)?)?;
    m.add_function(wrap_pyfunction!(preset_defect, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}

#[pymodule]
fn cilab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
