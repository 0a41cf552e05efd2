//! Python bindings: discrete forms, their semigroups and chains, plus the
//! scenario runner.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use difflab_core::form_assembly::{
    assemble_form, build_grid, classify_boundary as classify, energy, Boundary, BoundaryCondition, DiscreteForm, Grid,
    Side,
};
use difflab_core::path_sim::simulate_path;
use difflab_core::scale_measure::{DomainSpec, ScaleFunction, SpeedMeasure};
use difflab_core::scenario::{self, RunError, Suite};
use difflab_core::semigroup_mosco::{Scheme, SemigroupEvolver, DEFAULT_MAX_DT};
use difflab_core::weak_convergence;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn condition(name: &str) -> PyResult<BoundaryCondition> {
    match name {
        "neumann" => Ok(BoundaryCondition::Neumann),
        "dirichlet" => Ok(BoundaryCondition::Dirichlet),
        other => Err(PyValueError::new_err(format!("unknown boundary {other:?}"))),
    }
}

fn scheme(name: &str) -> PyResult<Scheme> {
    match name {
        "crank_nicolson" => Ok(Scheme::CrankNicolson),
        "exact_small" => Ok(Scheme::ExactSmall),
        other => Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    }
}

fn suite(name: &str) -> PyResult<Suite> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown suite {name:?}")))
}

/// Finite-volume form `½∫(du/ds)² ds` on `L²(m)` over a grid.
#[pyclass(name = "Form", frozen)]
struct PyForm {
    inner: DiscreteForm,
}

#[pymethods]
impl PyForm {
    /// Form from explicit grid data: points, cell masses and scale gaps.
    #[new]
    #[pyo3(signature = (points, cell_masses, scale_gaps, left="neumann", right="neumann"))]
    fn new(points: Vec<f64>, cell_masses: Vec<f64>, scale_gaps: Vec<f64>, left: &str, right: &str) -> PyResult<Self> {
        let grid = Grid::new(points, cell_masses, scale_gaps).map_err(value_err)?;
        let boundary = Boundary { left: condition(left)?, right: condition(right)? };
        Ok(Self { inner: assemble_form(grid, boundary).map_err(value_err)? })
    }

    /// Piecewise-linear scale through `knots` and constant speed density on
    /// `[lo, hi]`, discretized with `n` cells.
    #[staticmethod]
    #[pyo3(signature = (lo, hi, n, knots=None, density=1.0, left="neumann", right="neumann"))]
    fn from_scale(
        lo: f64,
        hi: f64,
        n: usize,
        knots: Option<Vec<(f64, f64)>>,
        density: f64,
        left: &str,
        right: &str,
    ) -> PyResult<Self> {
        let mid = 0.5 * (lo + hi);
        let domain = DomainSpec::bounded(lo, hi).map_err(value_err)?;
        let s = match knots {
            Some(k) => ScaleFunction::from_knots(k, mid),
            None => ScaleFunction::identity(lo, hi, mid),
        }
        .map_err(value_err)?;
        let m = SpeedMeasure::uniform(lo, hi, density).map_err(value_err)?;
        let grid = build_grid(&domain, &s, &m, n).map_err(value_err)?;
        let boundary = Boundary { left: condition(left)?, right: condition(right)? };
        Ok(Self { inner: assemble_form(grid, boundary).map_err(value_err)? })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.inner.positions.clone()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses.clone()
    }

    #[getter]
    fn merged_groups(&self) -> Vec<(usize, usize)> {
        self.inner.merged_groups.clone()
    }

    /// `T_t u` on states.
    #[pyo3(signature = (u, t, scheme="crank_nicolson", max_dt=DEFAULT_MAX_DT))]
    fn evolve(&self, py: Python<'_>, u: Vec<f64>, t: f64, scheme: &str, max_dt: f64) -> PyResult<Vec<f64>> {
        let ev = SemigroupEvolver::new(self.inner.clone(), self::scheme(scheme)?).with_max_dt(max_dt);
        py.detach(|| ev.evolve(&u, t)).map_err(value_err)
    }

    fn apply_generator(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply_generator(&u).map_err(value_err)
    }

    fn energy(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        energy(&self.inner, &u, &v).map_err(value_err)
    }

    /// One chain path from state `x0`: `(jump times, state positions)`.
    #[pyo3(signature = (x0, horizon, seed=0, stream=0))]
    fn simulate(&self, x0: usize, horizon: f64, seed: u64, stream: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let p = simulate_path(&self.inner, x0, horizon, seed, stream).map_err(value_err)?;
        let values = p.states.iter().map(|&s| self.inner.positions[s as usize]).collect();
        Ok((p.times, values))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Form(n_states={}, merged={})", self.inner.n_states(), self.inner.merged_groups.len())
    }
}

/// Feller test integral at one endpoint: `(approachable, integral)`.
#[pyfunction]
#[pyo3(signature = (a, b, window, side, c, knots=None, density=1.0, expansion_steps=64))]
#[allow(clippy::too_many_arguments)]
fn classify_boundary(
    a: f64,
    b: f64,
    window: (f64, f64),
    side: &str,
    c: f64,
    knots: Option<Vec<(f64, f64)>>,
    density: f64,
    expansion_steps: usize,
) -> PyResult<(bool, f64)> {
    let domain = DomainSpec::new(a, b, window).map_err(value_err)?;
    let s = match knots {
        Some(k) => ScaleFunction::from_knots(k, c),
        None => ScaleFunction::identity(window.0, window.1, c),
    }
    .map_err(value_err)?;
    let m = SpeedMeasure::uniform(window.0, window.1, density).map_err(value_err)?;
    let side = match side {
        "left" => Side::Left,
        "right" => Side::Right,
        other => return Err(PyValueError::new_err(format!("side must be left or right, got {other:?}"))),
    };
    let bc = classify(&domain, &s, &m, side, c, expansion_steps).map_err(value_err)?;
    Ok((bc.approachable, bc.test_integral))
}

/// Two-sample KS statistic and its 5% critical value.
#[pyfunction]
fn ks_two_sample(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = weak_convergence::ks_two_sample(&x, &y).map_err(value_err)?;
    Ok((r.stat, r.critical_5pct))
}

/// `P(ω(C·B, δ) > ρ)` on `[0, T]` by Monte Carlo.
#[pyfunction]
#[pyo3(signature = (c, horizon, delta, rho, n_mc=20_000, seed=0))]
fn brownian_modulus_bound(
    py: Python<'_>,
    c: f64,
    horizon: f64,
    delta: f64,
    rho: f64,
    n_mc: usize,
    seed: u64,
) -> PyResult<f64> {
    py.detach(|| weak_convergence::brownian_modulus_bound(c, horizon, delta, rho, n_mc, seed)).map_err(value_err)
}

/// Checks a scenario document; returns the normalized JSON.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<String> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(value_err)?;
    let sc = scenario::validate_config(&raw).map_err(value_err)?;
    Ok(serde_json::to_string(&sc.config).expect("config serializes"))
}

/// Runs a scenario into `out_dir`; returns `(suite, passed, detail)` per gate.
#[pyfunction]
#[pyo3(signature = (text, out_dir, suites=None))]
fn run_scenario(
    py: Python<'_>,
    text: &str,
    out_dir: &str,
    suites: Option<Vec<String>>,
) -> PyResult<Vec<(String, bool, String)>> {
    let raw: serde_json::Value = serde_json::from_str(text).map_err(value_err)?;
    let sc = scenario::validate_config(&raw).map_err(value_err)?;
    let suites: Vec<Suite> = match suites {
        Some(names) => names.iter().map(|n| suite(n)).collect::<PyResult<_>>()?,
        None if sc.config.mc.is_some() => Suite::ALL.to_vec(),
        None => Suite::MOSCO.to_vec(),
    };
    let outcome =
        py.detach(|| scenario::run_scenario(&sc, &suites, Path::new(out_dir), "python")).map_err(|e| match e {
            RunError::Io(io) => PyOSError::new_err(io.to_string()),
            other => value_err(other),
        })?;
    Ok(outcome
        .gates
        .into_iter()
        .map(|g| {
            let name =
                serde_json::to_value(g.suite).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
            (name, g.pass, g.detail)
        })
        .collect())
}

#[pymodule]
fn difflab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyForm>()?;
    m.add_function(wrap_pyfunction!(classify_boundary, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(brownian_modulus_bound, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
