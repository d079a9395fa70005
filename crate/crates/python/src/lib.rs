//! Python bindings for `levy_lab`.
//!
//! Covariances are passed as the same `key=value` spec strings the CLI
//! accepts (`"brownian"`, `"kind=fbm hurst=0.3"`, ...). Results come back as
//! plain Python floats, lists and dicts.

use levy_lab::levy_kernel::{self, ChaosNorm};
use levy_lab::pvariation;
use levy_lab::simulate::{run_mc, MCConfig};
use levy_lab::spectral::{self, Spectrum};
use levy_lab::{CovKernel, LevyError};
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: LevyError) -> PyErr {
    match e {
        LevyError::Numerical { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn kernel(spec: &str) -> PyResult<CovKernel> {
    spec.parse::<CovKernel>().map_err(to_py)
}

fn chaos_dict<'py>(py: Python<'py>, norm: &ChaosNorm) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", norm.value)?;
    d.set_item("raw", norm.raw)?;
    d.set_item("levels", norm.level_pair)?;
    d.set_item("refine", norm.refine)?;
    Ok(d)
}

fn spectrum_pairs(spec: &Spectrum) -> Vec<(f64, usize)> {
    spec.eigenvalues.iter().map(|e| (e.alpha, e.multiplicity)).collect()
}

/// Covariance `R(s, t)` of a kernel spec.
#[pyfunction]
fn covariance(spec: &str, s: f64, t: f64) -> PyResult<f64> {
    kernel(spec)?.eval(s, t).map_err(to_py)
}

/// Normalised spec string, e.g. `"bm"` becomes `"kind=brownian"`.
#[pyfunction]
fn canonical_kernel(spec: &str) -> PyResult<String> {
    Ok(kernel(spec)?.to_string())
}

/// Exact p-variation of `(time, value)` samples.
#[pyfunction]
fn v1p(samples: Vec<(f64, f64)>, p: f64) -> PyResult<f64> {
    pvariation::v1p(&samples, p).map_err(to_py)
}

/// Dyadic 2D p-variation estimate of a covariance at one grid level.
#[pyfunction]
fn v2p(spec: &str, p: f64, level: u32) -> PyResult<f64> {
    pvariation::v2p_grid(&kernel(spec)?, p, level).map_err(to_py)
}

/// `(levels, verdict)` where `levels` lists `(level, estimate)` pairs.
#[pyfunction]
fn variation_profile(spec: &str, p: f64, max_level: u32) -> PyResult<(Vec<(u32, f64)>, String)> {
    let prof = pvariation::variation_profile(&kernel(spec)?, p, max_level).map_err(to_py)?;
    Ok((prof.levels, prof.verdict.to_string()))
}

/// Whether the area exists for two fBm covariances with the given Hurst indices.
#[pyfunction]
fn existence_check_fbm(h1: f64, h2: f64) -> bool {
    levy_kernel::existence_check_fbm(h1, h2)
}

/// Dyadic kernel approximation `f_n(s, i, t, j)` with components 0 or 1.
#[pyfunction]
fn approx_eval(n: u32, s: f64, i: usize, t: f64, j: usize) -> PyResult<f64> {
    let comp = |c: usize| {
        levy_kernel::Component::from_index(c)
            .ok_or_else(|| PyValueError::new_err(format!("component {c} is not 0 or 1")))
    };
    levy_kernel::approx_eval(n, s, comp(i)?, t, comp(j)?).map_err(to_py)
}

/// Squared chaos norm `‖f_n − f_m‖²` for the covariance pair.
#[pyfunction]
#[pyo3(signature = (n, m, kernel1="brownian", kernel2="brownian", exact=false))]
fn norm_diff<'py>(
    py: Python<'py>,
    n: u32,
    m: u32,
    kernel1: &str,
    kernel2: &str,
    exact: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let (r1, r2) = (kernel(kernel1)?, kernel(kernel2)?);
    let norm =
        if exact { levy_kernel::norm_diff_exact(n, m, &r1, &r2) } else { levy_kernel::norm_diff(n, m, &r1, &r2, None) }
            .map_err(to_py)?;
    chaos_dict(py, &norm)
}

type CauchyRows = (Vec<(u32, u32, f64)>, Option<f64>);

/// `(rows, slope)` with rows `(n, m, ‖f_n − f_m‖²)` for consecutive levels.
#[pyfunction]
#[pyo3(signature = (levels, kernel1="brownian", kernel2="brownian"))]
fn cauchy_table(levels: Vec<u32>, kernel1: &str, kernel2: &str) -> PyResult<CauchyRows> {
    let t = levy_kernel::cauchy_table(&levels, &kernel(kernel1)?, &kernel(kernel2)?, None).map_err(to_py)?;
    Ok((t.rows.iter().map(|r| (r.n, r.m, r.norm.value)).collect(), t.slope))
}

/// Monte Carlo samples of the discrete area.
#[pyfunction]
#[pyo3(signature = (n_samples, level, seed=0, kernel1="brownian", kernel2="brownian"))]
fn simulate(n_samples: usize, level: u32, seed: u64, kernel1: &str, kernel2: &str) -> PyResult<Vec<f64>> {
    let cfg = MCConfig::new(seed, n_samples, level, kernel(kernel1)?, kernel(kernel2)?).map_err(to_py)?;
    Ok(run_mc(&cfg).map_err(to_py)?.samples)
}

/// Empirical characteristic function of `samples` on `t_grid`.
#[pyfunction]
fn empirical_cf(samples: Vec<f64>, t_grid: Vec<f64>) -> Vec<Complex64> {
    let n = samples.len() as f64;
    t_grid.iter().map(|&t| samples.iter().map(|&a| Complex64::new(0.0, t * a).exp()).sum::<Complex64>() / n).collect()
}

/// Classical spectrum truncated to `count` positive modes, as `(alpha, multiplicity)`.
#[pyfunction]
fn classical_spectrum(count: usize) -> PyResult<Vec<(f64, usize)>> {
    Ok(spectrum_pairs(&spectral::classical_spectrum(count).map_err(to_py)?))
}

/// Characteristic function from the classical spectrum: `(value, tail_bound)`.
#[pyfunction]
#[pyo3(signature = (t, count=10_000))]
fn cf(t: f64, count: usize) -> PyResult<(Complex64, f64)> {
    let spec = spectral::classical_spectrum(count).map_err(to_py)?;
    let p = spectral::cf_from_spectrum(&spec, Complex64::new(0.0, t), None).map_err(to_py)?;
    Ok((p.value, p.tail_bound))
}

/// Spectrum of the discretised operator, `(alpha, multiplicity)` sorted by `|alpha|`.
#[pyfunction]
#[pyo3(signature = (level, kernel1="brownian", kernel2="brownian"))]
fn general_spectrum(level: u32, kernel1: &str, kernel2: &str) -> PyResult<Vec<(f64, usize)>> {
    let spec = spectral::general_spectrum(&kernel(kernel1)?, &kernel(kernel2)?, level).map_err(to_py)?;
    Ok(spectrum_pairs(&spec))
}

/// Spectrum of the classical operator on a midpoint grid.
#[pyfunction]
fn classical_grid_spectrum(grid: usize) -> PyResult<Vec<(f64, usize)>> {
    let m = spectral::discretize_classical_operator(grid).map_err(to_py)?;
    Ok(spectrum_pairs(&spectral::eigen_solve(&m).map_err(to_py)?))
}

/// Runs the built-in self-checks; returns `(module, name, status, detail)` rows.
#[pyfunction]
fn self_check() -> Vec<(String, String, String, String)> {
    levy_lab::checks::run_all()
        .into_iter()
        .map(|c| (c.module.to_string(), c.name.to_string(), c.status.to_string(), c.detail))
        .collect()
}

#[pymodule]
fn levylab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(covariance, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(v1p, m)?)?;
    m.add_function(wrap_pyfunction!(v2p, m)?)?;
    m.add_function(wrap_pyfunction!(variation_profile, m)?)?;
    m.add_function(wrap_pyfunction!(existence_check_fbm, m)?)?;
    m.add_function(wrap_pyfunction!(approx_eval, m)?)?;
    m.add_function(wrap_pyfunction!(norm_diff, m)?)?;
    m.add_function(wrap_pyfunction!(cauchy_table, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_cf, m)?)?;
    m.add_function(wrap_pyfunction!(classical_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(cf, m)?)?;
    m.add_function(wrap_pyfunction!(general_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(classical_grid_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(self_check, m)?)?;
    Ok(())
}
