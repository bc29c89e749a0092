//! Python bindings: build a problem, check it, solve it and cross-check the
//! result with the dense Newton solver.

use std::sync::Arc;

use kirchhoff_core::elliptic::GreenOperator;
use kirchhoff_core::error::Error;
use kirchhoff_core::expr::Definition;
use kirchhoff_core::grid::{DomainSpec, Field, Grid};
use kirchhoff_core::nonlocal::{
    equation_residual, fixed_point_solve, verify_invariance, InvariantEnvelope, SolveOptions, SolveReport, StartPoint,
};
use kirchhoff_core::oracle::{green_positivity_check, newton_solve, NewtonOptions, MAX_DENSE_AXIS};
use kirchhoff_core::problems::{ExampleKind, ExampleParams, Forcing, G2Options, Parameter, ProblemCandidate};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NoConvergence { .. } | Error::SolverFailure(_) | Error::SingularJacobian(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_dict<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn domain(n: usize, dim: usize) -> PyResult<Arc<Grid>> {
    let bounds = match dim {
        1 => vec![(0.0, 1.0)],
        2 => vec![(0.0, 1.0), (0.0, 1.0)],
        _ => return Err(PyValueError::new_err(format!("dim must be 1 or 2, got {dim}"))),
    };
    let spec = DomainSpec::new(bounds, vec![n; dim]).map_err(to_py)?;
    Ok(Grid::new(spec))
}

/// A problem on a uniform grid together with its candidate interval.
#[pyclass(frozen, module = "kirchhoff")]
struct Problem {
    green: GreenOperator,
    candidate: ProblemCandidate,
}

#[pymethods]
impl Problem {
    /// One of the four built-in examples. `parameter` is the absolute `lambda`
    /// or `mu`; `fraction` scales the threshold instead (default 0.5).
    #[new]
    #[pyo3(signature = (
        kind = "example1", n = 128, dim = 1, *, forcing = None, p = None, q = None,
        c = None, d = None, sigma = None, parameter = None, fraction = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: &str,
        n: usize,
        dim: usize,
        forcing: Option<&str>,
        p: Option<f64>,
        q: Option<f64>,
        c: Option<f64>,
        d: Option<f64>,
        sigma: Option<f64>,
        parameter: Option<f64>,
        fraction: Option<f64>,
    ) -> PyResult<Self> {
        let kind: ExampleKind = kind.parse().map_err(to_py)?;
        let mut params = ExampleParams::defaults(kind);
        if let Some(f) = forcing {
            params.forcing = Forcing::preset(f).map_err(to_py)?;
        }
        for (slot, value) in [
            (&mut params.p, p),
            (&mut params.q, q),
            (&mut params.c, c),
            (&mut params.d, d),
            (&mut params.sigma, sigma),
        ] {
            if let Some(v) = value {
                *slot = v;
            }
        }
        params.parameter = match (parameter, fraction) {
            (Some(_), Some(_)) => return Err(PyValueError::new_err("give parameter or fraction, not both")),
            (Some(v), None) => Parameter::Value(v),
            (None, Some(f)) => Parameter::Fraction(f),
            (None, None) => params.parameter,
        };
        let green = GreenOperator::new(&domain(n, dim)?).map_err(to_py)?;
        let candidate = params.candidate(&green).map_err(to_py)?;
        Ok(Self { green, candidate })
    }

    /// A problem from definition text (keys `A`, `g`, `phi`, `psi`, `m`, `p`, `alpha`).
    #[staticmethod]
    #[pyo3(signature = (text, n = 128, dim = 1))]
    fn from_definition(text: &str, n: usize, dim: usize) -> PyResult<Self> {
        let def = Definition::parse(text).map_err(to_py)?;
        let green = GreenOperator::new(&domain(n, dim)?).map_err(to_py)?;
        let candidate = def.candidate(&green).map_err(to_py)?;
        Ok(Self { green, candidate })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.candidate.name
    }

    #[getter]
    fn parameter(&self) -> Option<f64> {
        self.candidate.parameter
    }

    /// `(name, value)` of the admissible parameter bound, if any.
    #[getter]
    fn threshold(&self) -> Option<(&'static str, f64)> {
        self.candidate.threshold.map(|t| (t.name, t.value))
    }

    #[getter]
    fn constants(&self) -> Vec<(&'static str, f64)> {
        self.candidate.constants.clone()
    }

    /// Interior node coordinates, one tuple per node.
    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.green.grid().points().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn phi(&self) -> Vec<f64> {
        self.candidate.interval.phi.values().to_vec()
    }

    #[getter]
    fn psi(&self) -> Vec<f64> {
        self.candidate.interval.psi.values().to_vec()
    }

    /// Both structural checks as a dict with keys `g1` and `g2`.
    #[pyo3(signature = (seed = 0))]
    fn check<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let (g1, g2) = self.candidate.check(&G2Options::with_seed(seed)).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("g1", to_dict(py, &g1)?)?;
        out.set_item("g2", to_dict(py, &g2)?)?;
        Ok(out)
    }

    /// Samples the interval and checks that the solution map keeps it invariant.
    #[pyo3(signature = (trials = 1000, seed = 0))]
    fn verify_invariance<'py>(&self, py: Python<'py>, trials: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let c = &self.candidate;
        let report = verify_invariance(&c.spec, &self.green, &c.interval, trials, seed).map_err(to_py)?;
        to_dict(py, &report)
    }

    #[pyo3(signature = (seed = 0))]
    fn green_positivity<'py>(&self, py: Python<'py>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        to_dict(py, &green_positivity_check(&self.green, seed).map_err(to_py)?)
    }

    /// Fixed-point solve. Raises `ValueError` when the structural checks fail.
    #[pyo3(signature = (theta = 1.0, tol = 1e-10, max_iter = 10_000, start = "psi-end", seed = 0))]
    fn solve(&self, py: Python<'_>, theta: f64, tol: f64, max_iter: usize, start: &str, seed: u64) -> PyResult<Solution> {
        let start: StartPoint = start.parse().map_err(PyValueError::new_err)?;
        let opts = SolveOptions {
            theta,
            tol,
            max_iter,
            start,
            ..SolveOptions::default()
        };
        let built = self.candidate.clone().certify(&G2Options::with_seed(seed)).map_err(to_py)?;
        let green = &self.green;
        let report = py
            .detach(|| fixed_point_solve(&built.spec, green, &built.interval, &opts))
            .map_err(to_py)?;
        let inside = InvariantEnvelope::new(&built.spec, &built.interval)
            .map_err(to_py)?
            .contains(&report.u);
        Ok(Solution { report, inside })
    }

    /// Dense damped Newton solve from `start` (default: interval midpoint).
    #[pyo3(signature = (start = None, tol = 1e-12, max_iter = 100))]
    fn newton<'py>(
        &self,
        py: Python<'py>,
        start: Option<Vec<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let c = &self.candidate;
        if c.spec.grid().interior_counts().iter().any(|&m| m > MAX_DENSE_AXIS) {
            return Err(PyValueError::new_err(format!(
                "dense Newton needs at most {MAX_DENSE_AXIS} interior nodes per axis"
            )));
        }
        let u0 = match start {
            Some(v) => Field::new(c.spec.grid(), v).map_err(to_py)?,
            None => c.interval.phi.zip_map(&c.interval.psi, |a, b| 0.5 * (a + b)).map_err(to_py)?,
        };
        let r = newton_solve(&c.spec, &u0, &NewtonOptions { tol, max_iter }).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("u", r.u.values().to_vec())?;
        out.set_item("converged", r.converged)?;
        out.set_item("iterations", r.newton_iterations)?;
        out.set_item("final_residual", r.final_residual)?;
        Ok(out)
    }

    /// Scaled equation residual of an arbitrary vector of node values.
    fn residual(&self, u: Vec<f64>) -> PyResult<f64> {
        let spec = &self.candidate.spec;
        let u = Field::new(spec.grid(), u).map_err(to_py)?;
        equation_residual(spec, &u).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        let counts = self.green.grid().interior_counts();
        format!("Problem(name={:?}, interior={counts:?})", self.candidate.name)
    }
}

/// Result of a fixed-point solve.
#[pyclass(frozen, module = "kirchhoff")]
struct Solution {
    report: SolveReport,
    inside: bool,
}

#[pymethods]
impl Solution {
    #[getter]
    fn u(&self) -> Vec<f64> {
        self.report.u.values().to_vec()
    }

    /// `converged`, `max-iter` or `left-interval`.
    #[getter]
    fn status(&self) -> &'static str {
        self.report.status.as_str()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.report.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.report.residual
    }

    #[getter]
    fn m_const(&self) -> f64 {
        self.report.m_const
    }

    #[getter]
    fn r_m(&self) -> f64 {
        self.report.r_m
    }

    #[getter]
    fn history(&self) -> Vec<f64> {
        self.report.sup_diff_history.clone()
    }

    /// Whether `u` lies in `[r_M phi, psi]` up to the interval slack.
    #[getter]
    fn inside(&self) -> bool {
        self.inside
    }

    fn to_json(&self) -> String {
        self.report.to_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(status={:?}, iterations={}, residual={:.3e})",
            self.status(),
            self.report.iterations,
            self.report.residual
        )
    }
}

/// Discrete torsion function on `n` cells of the unit interval or square.
#[pyfunction]
#[pyo3(signature = (n, dim = 1))]
fn torsion(n: usize, dim: usize) -> PyResult<Vec<f64>> {
    let green = GreenOperator::new(&domain(n, dim)?).map_err(to_py)?;
    Ok(green.torsion_function().map_err(to_py)?.into_values())
}

/// Principal Dirichlet eigenvalue and its unit-max eigenvector.
#[pyfunction]
#[pyo3(signature = (n, dim = 1, tol = 1e-12))]
fn principal_eigenpair(n: usize, dim: usize, tol: f64) -> PyResult<(f64, Vec<f64>)> {
    let green = GreenOperator::new(&domain(n, dim)?).map_err(to_py)?;
    let pair = green.principal_eigenpair(tol).map_err(to_py)?;
    Ok((pair.lambda1, pair.phi1.into_values()))
}

#[pymodule]
fn kirchhoff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(torsion, m)?)?;
    m.add_function(wrap_pyfunction!(principal_eigenpair, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
