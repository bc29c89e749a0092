//! Independent cross-checks: a dense damped Newton solver for the full
//! nonlocal system and structural checks of discrete inverse positivity.
//!
//! Newton works on
//!
//! ```text
//! F(u) = A(‖u‖_p, ‖∇u‖₂) · (-Δ_h u) - g(·, u) = 0
//! ```
//!
//! with the nonlocal dependence of `A` kept in the Jacobian as a rank-one
//! term, so it shares nothing with the fixed-point path beyond the grid.

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elliptic::{h1_seminorm, lp_norm, GreenOperator};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::nonlocal::{g_max, ProblemSpec};

/// Per-axis interior node cap for the dense Jacobian.
pub const MAX_DENSE_AXIS: usize = 65;
/// Total node cap for the dense Green matrix assembly.
pub const MAX_DENSE_GREEN: usize = 64;

const DAMPING_FLOOR: f64 = 1.0 / (1u64 << 20) as f64;

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    /// Stop once `‖F‖_∞ ≤ tol · (1 + G)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub u: Field,
    pub newton_iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    /// The `G` used to scale the stopping test.
    pub g_scale: f64,
}

impl OracleResult {
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                what: format!("Newton oracle (residual {:.3e})", self.final_residual),
                iterations: self.newton_iterations,
            })
        }
    }
}

fn check_dense_size(grid: &Grid) -> Result<()> {
    if grid.interior_counts().iter().any(|&n| n > MAX_DENSE_AXIS) {
        return Err(Error::GridTooLarge(format!(
            "{:?} interior nodes per axis, dense oracle allows at most {MAX_DENSE_AXIS}",
            grid.interior_counts()
        )));
    }
    Ok(())
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct System<'a> {
    spec: &'a ProblemSpec,
    lap: DMatrix<f64>,
}

impl System<'_> {
    fn field(&self, u: &DVector<f64>) -> Result<Field> {
        Field::new(self.spec.grid(), u.as_slice().to_vec())
    }

    fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let field = self.field(u)?;
        let a = self.spec.coefficient_at(&field)?;
        let lu = &self.lap * u;
        let grid = self.spec.grid();
        let g = self.spec.nonlinearity();
        Ok(DVector::from_iterator(
            u.len(),
            grid.points()
                .zip(lu.iter().zip(u.iter()))
                .map(|(x, (l, ui))| a * l - g.eval(x, *ui)),
        ))
    }

    fn jacobian(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        let spec = self.spec;
        let grid = spec.grid();
        let field = self.field(u)?;
        let p = spec.norm_exponent();
        let s = lp_norm(&field, p)?;
        let t = h1_seminorm(&field);
        let coef = spec.coefficient();
        let a = coef.eval(s, t)?;
        let (a_s, a_t) = coefficient_partials(spec, s, t)?;
        let lu = &self.lap * u;
        let vol = grid.cell_volume();

        // ∂s/∂u_i = vol |u_i|^{p-1} sgn(u_i) s^{1-p},  ∂t/∂u = vol L u / t
        let ds = if s > 0.0 {
            DVector::from_iterator(
                u.len(),
                u.iter()
                    .map(|ui| vol * ui.abs().powf(p - 1.0) * ui.signum() * s.powf(1.0 - p)),
            )
        } else {
            DVector::zeros(u.len())
        };
        let dt = if t > 0.0 {
            &lu * (vol / t)
        } else {
            DVector::zeros(u.len())
        };
        let grad_a = ds * a_s + dt * a_t;

        let mut jac = &self.lap * a;
        jac += &lu * grad_a.transpose();
        let g = spec.nonlinearity();
        for (i, x) in grid.points().enumerate() {
            let ui = u[i];
            let step = 1e-6 * (1.0 + ui.abs());
            let dg = (g.eval(x, ui + step) - g.eval(x, ui - step)) / (2.0 * step);
            jac[(i, i)] -= dg;
        }
        Ok(jac)
    }
}

/// Partial derivatives of the working coefficient by central differences,
/// one-sided at the `s = 0` / `t = 0` edge.
fn coefficient_partials(spec: &ProblemSpec, s: f64, t: f64) -> Result<(f64, f64)> {
    let coef = spec.coefficient();
    let diff = |at: f64, f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let h = 1e-6 * (1.0 + at.abs());
        if at - h >= 0.0 {
            Ok((f(at + h)? - f(at - h)?) / (2.0 * h))
        } else {
            Ok((f(at + h)? - f(at)?) / h)
        }
    };
    let a_s = diff(s, &|x| coef.eval(x, t))?;
    let a_t = diff(t, &|x| coef.eval(s, x))?;
    Ok((a_s, a_t))
}

/// `F(u)` as a field, for derivative checks.
pub fn residual_vector(spec: &ProblemSpec, u: &Field) -> Result<Field> {
    let sys = System {
        spec,
        lap: spec.grid().assemble_dense(),
    };
    let r = sys.residual(&DVector::from_column_slice(u.values()))?;
    Field::new(spec.grid(), r.as_slice().to_vec())
}

/// Dense Jacobian of `F` at `u`.
pub fn jacobian(spec: &ProblemSpec, u: &Field) -> Result<DMatrix<f64>> {
    check_dense_size(spec.grid())?;
    let sys = System {
        spec,
        lap: spec.grid().assemble_dense(),
    };
    sys.jacobian(&DVector::from_column_slice(u.values()))
}

/// Damped Newton on `F(u) = 0` from `u0`.
///
/// Each step is halved until `‖F‖_∞` decreases, down to `2⁻²⁰`. Stagnation
/// or the iteration cap end the run with `converged = false`; a singular
/// Jacobian is an error.
pub fn newton_solve(spec: &ProblemSpec, u0: &Field, opts: &NewtonOptions) -> Result<OracleResult> {
    let grid = spec.grid();
    check_dense_size(grid)?;
    u0.check_on(grid)?;
    let sys = System {
        spec,
        lap: grid.assemble_dense(),
    };
    let g_scale = g_max(spec.nonlinearity(), grid, &u0.map(f64::abs));
    let stop = opts.tol * (1.0 + g_scale.abs());
    let mut u = DVector::from_column_slice(u0.values());
    let mut f = sys.residual(&u)?;
    let mut norm = sup(&f);
    let mut iterations = 0;
    let mut converged = norm <= stop;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let jac = sys.jacobian(&u)?;
        let step = jac
            .lu()
            .solve(&(-&f))
            .ok_or(Error::SingularJacobian(iterations))?;
        let mut damping = 1.0;
        let accepted = loop {
            let trial = &u + &step * damping;
            let f_trial = sys.residual(&trial)?;
            let n_trial = sup(&f_trial);
            if n_trial < norm {
                break Some((trial, f_trial, n_trial));
            }
            damping *= 0.5;
            if damping < DAMPING_FLOOR {
                break None;
            }
        };
        let Some((next, f_next, n_next)) = accepted else {
            break;
        };
        u = next;
        f = f_next;
        norm = n_next;
        converged = norm <= stop;
    }
    Ok(OracleResult {
        u: sys.field(&u)?,
        newton_iterations: iterations,
        final_residual: norm,
        converged,
        g_scale,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositivityVariant {
    Dense,
    RowSum,
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenPositivityReport {
    pub variant: PositivityVariant,
    pub pass: bool,
    /// Smallest Green matrix entry (dense) or smallest torsion value (row sum).
    pub min_entry: f64,
    /// Largest violation of `solve(f) ≤ solve(f')` over the ordered pairs
    /// (row-sum variant only; zero otherwise).
    pub monotonicity_excess: f64,
}

const POSITIVITY_TOL: f64 = 1e-13;
const MONOTONE_PAIRS: usize = 50;

/// Assembles `(-Δ_h)⁻¹` column by column and reports its smallest entry.
pub fn green_positivity_dense(green: &GreenOperator) -> Result<GreenPositivityReport> {
    let n = green.grid().len();
    if n > MAX_DENSE_GREEN {
        return Err(Error::GridTooLarge(format!(
            "{n} interior nodes, dense Green assembly allows at most {MAX_DENSE_GREEN}"
        )));
    }
    let mut min_entry = f64::INFINITY;
    let mut unit = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        let col = green.solve_slice(&unit)?;
        min_entry = col.iter().copied().fold(min_entry, f64::min);
        unit[j] = 0.0;
    }
    Ok(GreenPositivityReport {
        variant: PositivityVariant::Dense,
        pass: min_entry >= -POSITIVITY_TOL,
        min_entry,
        monotonicity_excess: 0.0,
    })
}

/// Torsion nonnegativity plus monotonicity of the solve on seeded ordered
/// pairs `f ≤ f'`.
pub fn green_positivity_row_sum(green: &GreenOperator, seed: u64) -> Result<GreenPositivityReport> {
    let grid = green.grid();
    let xi = green.torsion_function()?;
    let min_entry = xi.min();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut excess = f64::NEG_INFINITY;
    for _ in 0..MONOTONE_PAIRS {
        let low: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let high: Vec<f64> = low.iter().map(|v| v + rng.random::<f64>()).collect();
        let a = green.solve_slice(&low)?;
        let b = green.solve_slice(&high)?;
        let scale = 1e-12 * (1.0 + xi.max());
        for (x, y) in a.iter().zip(&b) {
            excess = excess.max(x - y - scale);
        }
    }
    Ok(GreenPositivityReport {
        variant: PositivityVariant::RowSum,
        pass: min_entry >= -1e-12 * xi.max() && excess <= 0.0,
        min_entry,
        monotonicity_excess: excess.max(0.0),
    })
}

/// Dense variant on grids with at most 64 nodes, row-sum variant otherwise.
pub fn green_positivity_check(green: &GreenOperator, seed: u64) -> Result<GreenPositivityReport> {
    if green.grid().len() <= MAX_DENSE_GREEN {
        green_positivity_dense(green)
    } else {
        green_positivity_row_sum(green, seed)
    }
}
