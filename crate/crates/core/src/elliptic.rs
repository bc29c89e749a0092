//! Linear solves against `-Δ_h` (the discrete Green operator), the principal
//! Dirichlet eigenpair, and the discrete norms entering the coefficient.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{neg_laplacian_into, Field, Grid};

/// Largest per-axis interior count factorized directly in 2D.
const BANDED_LIMIT_2D: usize = 129;
const CG_RELATIVE_RESIDUAL: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 10_000;

/// Lower-triangular band factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i], left-padded with zeros
    data: Vec<f64>,
}

impl BandCholesky {
    fn factor(grid: &Grid) -> Result<Self> {
        let n = grid.len();
        let bw = grid.bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        // band of -Δ_h
        let h = grid.spacing();
        let (diag, off_x, off_y) = match grid.dimension() {
            1 => (2.0 / (h[0] * h[0]), -1.0 / (h[0] * h[0]), 0.0),
            _ => (
                2.0 / (h[0] * h[0]) + 2.0 / (h[1] * h[1]),
                -1.0 / (h[0] * h[0]),
                -1.0 / (h[1] * h[1]),
            ),
        };
        let nx = grid.interior_counts()[0];
        for i in 0..n {
            data[i * w + bw] = diag;
            if i % nx != 0 {
                data[i * w + bw - 1] = off_x;
            }
            if grid.dimension() == 2 && i >= nx {
                data[i * w] = off_y;
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut sum = data[i * w + (j + bw - i)];
                for k in k0..j {
                    sum -= data[i * w + (k + bw - i)] * data[j * w + (k + bw - j)];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::SolverFailure(format!(
                            "non-positive pivot {sum} at row {i}"
                        )));
                    }
                    data[i * w + bw] = sum.sqrt();
                } else {
                    data[i * w + (j + bw - i)] = sum / data[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut sum = x[i];
            for k in i.saturating_sub(bw)..i {
                sum -= self.data[i * w + (k + bw - i)] * x[k];
            }
            x[i] = sum / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                sum -= self.data[k * w + (i + bw - k)] * x[k];
            }
            x[i] = sum / self.data[i * w + bw];
        }
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Banded(BandCholesky),
    ConjugateGradient { max_iter: usize },
}

/// Inverse of `-Δ_h` on a fixed grid.
///
/// Immutable once built; concurrent solves only touch their own buffers.
#[derive(Debug)]
pub struct GreenOperator {
    grid: Arc<Grid>,
    backend: Backend,
    torsion: OnceLock<Field>,
}

impl GreenOperator {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        let direct = grid.dimension() == 1
            || grid.interior_counts().iter().all(|&n| n <= BANDED_LIMIT_2D);
        let backend = if direct {
            Backend::Banded(BandCholesky::factor(grid)?)
        } else {
            Backend::ConjugateGradient {
                max_iter: 20 * grid.len(),
            }
        };
        Ok(Self {
            grid: Arc::clone(grid),
            backend,
            torsion: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Banded(_))
    }

    /// Returns `u` with `-Δ_h u = f`.
    pub fn solve_poisson(&self, f: &Field) -> Result<Field> {
        f.check_on(&self.grid)?;
        let values = self.solve_slice(f.values())?;
        Field::new(&self.grid, values)
    }

    pub(crate) fn solve_slice(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Banded(chol) => {
                let mut x = rhs.to_vec();
                chol.solve_in_place(&mut x);
                Ok(x)
            }
            Backend::ConjugateGradient { max_iter } => {
                conjugate_gradient(&self.grid, rhs, *max_iter)
            }
        }
    }

    /// The torsion function `ξ = (-Δ_h)⁻¹ 1`, computed once and cached.
    pub fn torsion_function(&self) -> Result<Field> {
        if let Some(xi) = self.torsion.get() {
            return Ok(xi.clone());
        }
        let xi = self.solve_poisson(&Field::constant(&self.grid, 1.0))?;
        Ok(self.torsion.get_or_init(|| xi).clone())
    }

    /// Principal eigenpair of `-Δ_h` by inverse power iteration.
    ///
    /// Iterates until successive Rayleigh quotients differ by less than
    /// `tol * λ` and the max-normalized iterates stop moving at the same
    /// level.
    pub fn principal_eigenpair(&self, tol: f64) -> Result<EigenPair> {
        if !(tol > 0.0) {
            return Err(Error::InvalidExponent(format!(
                "eigen tolerance must be positive, got {tol}"
            )));
        }
        let vector_tol = tol.max(64.0 * f64::EPSILON);
        let mut v = vec![1.0; self.grid.len()];
        let mut lambda_prev = f64::INFINITY;
        for iter in 1..=EIGEN_MAX_ITER {
            let w = self.solve_slice(&v)?;
            // Aw = v, so the Rayleigh quotient of w is (w·v)/(w·w)
            let wv: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            let ww: f64 = w.iter().map(|a| a * a).sum();
            let lambda = wv / ww;
            let peak = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let next: Vec<f64> = w.iter().map(|x| x / peak).collect();
            let moved = next
                .iter()
                .zip(&v)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            if (lambda - lambda_prev).abs() < tol * lambda && moved < vector_tol {
                let phi1 = Field::new(&self.grid, v)?;
                return Ok(EigenPair {
                    lambda1: lambda,
                    phi1,
                    iterations: iter,
                });
            }
            lambda_prev = lambda;
        }
        Err(Error::NoConvergence {
            what: "inverse power iteration".into(),
            iterations: EIGEN_MAX_ITER,
        })
    }
}

/// Principal Dirichlet eigenvalue and its positive eigenfunction with
/// `max φ₁ = 1`.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub lambda1: f64,
    pub phi1: Field,
    pub iterations: usize,
}

fn conjugate_gradient(grid: &Grid, rhs: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let h = grid.spacing();
    let diag: f64 = h.iter().map(|hk| 2.0 / (hk * hk)).sum();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().map(|v| v / diag).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        neg_laplacian_into(grid, &p, &mut ap);
        let step = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        if dot(&r, &r).sqrt() <= CG_RELATIVE_RESIDUAL * b_norm {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag;
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure(format!(
        "conjugate gradient did not reach relative residual {CG_RELATIVE_RESIDUAL} in {max_iter} iterations"
    )))
}

/// Discrete `L^p` norm by nodal (midpoint) quadrature.
pub fn lp_norm(u: &Field, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidExponent(format!(
            "norm exponent must satisfy 1 <= p < inf, got {p}"
        )));
    }
    let vol = u.grid().cell_volume();
    let sum: f64 = if p == 2.0 {
        u.values().iter().map(|v| v * v).sum()
    } else {
        u.values().iter().map(|v| v.abs().powf(p)).sum()
    };
    Ok((vol * sum).powf(1.0 / p))
}

/// Discrete `‖∇u‖₂` from the Dirichlet energy `vol · u·(-Δ_h u)`.
pub fn h1_seminorm(u: &Field) -> f64 {
    let grid = u.grid();
    let mut lu = vec![0.0; u.len()];
    neg_laplacian_into(grid, u.values(), &mut lu);
    let energy: f64 = u.values().iter().zip(&lu).map(|(a, b)| a * b).sum();
    (grid.cell_volume() * energy).max(0.0).sqrt()
}
