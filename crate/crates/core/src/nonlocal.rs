//! The nonlocal problem `-A(‖u‖_p, ‖∇u‖₂) Δu = g(x, u)` with zero Dirichlet
//! data, the solution map
//!
//! ```text
//! T(v) = (-Δ_h)⁻¹ g(·, v) / A(‖v‖_p, ‖∇v‖₂),
//! ```
//!
//! its invariant order interval `[r_M φ, ψ]`, and a relaxed fixed-point
//! iteration that stays inside that interval.
//!
//! The user-facing coefficient may have any positive lower bound `m`;
//! [`ProblemSpec`] divides both `A` and `g` by `m` so the working coefficient
//! satisfies `A ≥ 1`. `T` is unchanged by this rescaling, but `M`, `r_M` and
//! the structural checks are computed on the rescaled problem.

use std::fmt;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elliptic::{h1_seminorm, lp_norm, GreenOperator};
use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, Field, Grid};

pub type CoefficientFn = dyn Fn(f64, f64) -> f64 + Send + Sync;
pub type NonlinearityFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// Continuous coefficient `A(s, t)` with a declared positive lower bound.
#[derive(Clone)]
pub struct CoefficientA {
    eval: Arc<CoefficientFn>,
    lower_bound: f64,
}

impl fmt::Debug for CoefficientA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientA")
            .field("lower_bound", &self.lower_bound)
            .finish_non_exhaustive()
    }
}

impl CoefficientA {
    pub fn new(lower_bound: f64, eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(lower_bound > 0.0 && lower_bound.is_finite()) {
            return Err(Error::ParameterOutOfRange {
                name: "m",
                value: lower_bound,
                range: "(0, inf)".into(),
            });
        }
        Ok(Self {
            eval: Arc::new(eval),
            lower_bound,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(value, move |_, _| value)
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound
    }

    /// Evaluates `A(s, t)`; a value below the declared bound is an error.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        let value = (self.eval)(s, t);
        if !(value >= self.lower_bound) {
            return Err(Error::CoefficientBelowBound {
                s,
                t,
                value,
                bound: self.lower_bound,
            });
        }
        Ok(value)
    }

    /// `A / m`, whose lower bound is 1.
    pub fn normalized(&self) -> Self {
        let m = self.lower_bound;
        if m == 1.0 {
            return self.clone();
        }
        let inner = Arc::clone(&self.eval);
        Self {
            eval: Arc::new(move |s, t| inner(s, t) / m),
            lower_bound: 1.0,
        }
    }
}

/// Right-hand side `g(x, s)`.
///
/// Hölder continuity in `x` is a user obligation; it cannot be checked from
/// an evaluator.
#[derive(Clone)]
pub struct NonlinearityG {
    eval: Arc<NonlinearityFn>,
}

impl fmt::Debug for NonlinearityG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("NonlinearityG { .. }")
    }
}

impl NonlinearityG {
    pub fn new(eval: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, x: &[f64], s: f64) -> f64 {
        (self.eval)(x, s)
    }

    pub fn scaled(&self, c: f64) -> Self {
        if c == 1.0 {
            return self.clone();
        }
        let inner = Arc::clone(&self.eval);
        Self::new(move |x, s| c * inner(x, s))
    }

    /// Nodewise `g(x_i, v_i)`.
    pub fn on_field(&self, v: &Field) -> Result<Field> {
        let grid = v.grid();
        let values = grid
            .points()
            .zip(v.values())
            .map(|(x, &s)| self.eval(x, s))
            .collect();
        Field::new(grid, values)
    }
}

/// Everything defining one nonlocal Dirichlet problem on a grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    grid: Arc<Grid>,
    coefficient: CoefficientA,
    nonlinearity: NonlinearityG,
    norm_exponent: f64,
    scale: f64,
}

impl ProblemSpec {
    /// `norm_exponent` is the `p` in `‖u‖_p`; any `p > 1` is admissible on
    /// 1D and 2D domains where the critical Sobolev exponent is infinite.
    pub fn new(
        grid: &Arc<Grid>,
        coefficient: CoefficientA,
        nonlinearity: NonlinearityG,
        norm_exponent: f64,
    ) -> Result<Self> {
        if !(norm_exponent > 1.0 && norm_exponent.is_finite()) {
            return Err(Error::InvalidExponent(format!(
                "norm exponent must satisfy 1 < p < inf, got {norm_exponent}"
            )));
        }
        let scale = coefficient.lower_bound();
        Ok(Self {
            grid: Arc::clone(grid),
            nonlinearity: nonlinearity.scaled(1.0 / scale),
            coefficient: coefficient.normalized(),
            norm_exponent,
            scale,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Working coefficient (lower bound 1).
    pub fn coefficient(&self) -> &CoefficientA {
        &self.coefficient
    }

    /// Working nonlinearity (divided by the original lower bound).
    pub fn nonlinearity(&self) -> &NonlinearityG {
        &self.nonlinearity
    }

    pub fn norm_exponent(&self) -> f64 {
        self.norm_exponent
    }

    /// The lower bound `m` of the coefficient as supplied.
    pub fn original_lower_bound(&self) -> f64 {
        self.scale
    }

    pub fn norms(&self, u: &Field) -> Result<Norms> {
        Ok(Norms {
            lp: lp_norm(u, self.norm_exponent)?,
            h1: h1_seminorm(u),
        })
    }

    /// `A(‖u‖_p, ‖∇u‖₂)` for the working coefficient.
    pub fn coefficient_at(&self, u: &Field) -> Result<f64> {
        let n = self.norms(u)?;
        self.coefficient.eval(n.lp, n.h1)
    }
}

/// The two global norms the coefficient depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Norms {
    pub lp: f64,
    pub h1: f64,
}

/// Sub/supersolution pair `0 ≤ φ ≤ ψ` and the exponent `α` of the
/// β-scaling condition.
#[derive(Debug, Clone)]
pub struct OrderInterval {
    pub phi: Field,
    pub psi: Field,
    pub alpha: f64,
}

impl OrderInterval {
    pub fn new(phi: Field, psi: Field, alpha: f64) -> Result<Self> {
        let interval = Self::new_unchecked(phi, psi, alpha)?;
        if let Some(i) = interval.phi.values().iter().position(|&v| v < 0.0) {
            return Err(Error::InvalidInterval(format!(
                "phi is negative ({}) at node {i}",
                interval.phi.values()[i]
            )));
        }
        if let Some(i) = interval
            .phi
            .values()
            .iter()
            .zip(interval.psi.values())
            .position(|(a, b)| a > b)
        {
            return Err(Error::InvalidInterval(format!(
                "phi ({}) exceeds psi ({}) at node {i}",
                interval.phi.values()[i],
                interval.psi.values()[i]
            )));
        }
        Ok(interval)
    }

    /// Skips the ordering checks; used to diagnose candidate pairs that may
    /// violate them.
    pub fn new_unchecked(phi: Field, psi: Field, alpha: f64) -> Result<Self> {
        psi.check_on(phi.grid())?;
        if !alpha.is_finite() {
            return Err(Error::UnsupportedAlpha(alpha));
        }
        Ok(Self { phi, psi, alpha })
    }

    /// Slack used for every membership test: `1e-10 · (1 + ‖ψ‖_∞)`.
    pub fn slack(&self) -> f64 {
        1e-10 * (1.0 + self.psi.sup_norm())
    }
}

/// `M` and `r_M` for an interval, together with the shrunken lower end
/// `r_M φ` of the invariant set.
#[derive(Debug, Clone)]
pub struct InvariantEnvelope {
    pub m_const: f64,
    pub r_m: f64,
    pub lower: Field,
    pub upper: Field,
    pub slack: f64,
}

impl InvariantEnvelope {
    pub fn new(spec: &ProblemSpec, interval: &OrderInterval) -> Result<Self> {
        let psi_norms = spec.norms(&interval.psi)?;
        let m_const = maximize_a(spec.coefficient(), psi_norms.lp, psi_norms.h1)?;
        let r_m = compute_r_m(m_const, interval.alpha)?;
        Ok(Self {
            m_const,
            r_m,
            lower: interval.phi.scaled(r_m),
            upper: interval.psi.clone(),
            slack: interval.slack(),
        })
    }

    /// Largest amount by which `w` leaves `[lower - slack, upper + slack]`;
    /// non-positive when `w` is inside.
    pub fn excess(&self, w: &Field) -> f64 {
        w.values()
            .iter()
            .zip(self.lower.values().iter().zip(self.upper.values()))
            .fold(f64::NEG_INFINITY, |m, (&v, (&lo, &hi))| {
                m.max(lo - v).max(v - hi)
            })
            - self.slack
    }

    pub fn contains(&self, w: &Field) -> bool {
        self.excess(w) <= 0.0
    }
}

const COARSE_SAMPLES: usize = 64;
const REFINE_ROUNDS: usize = 3;
const REFINE_FACTOR: usize = 8;
const MAX_INFLATION: f64 = 1e-9;

/// `M = max { A(s, t) : (s, t) ∈ [0, s_max] × [0, t_max] }` by sampling.
///
/// A 64×64 coarse scan is followed by three refinement rounds around the
/// best sample, each shrinking the cell 8× per axis. The result is inflated
/// by `1e-9` relative so that it errs upward, except when every sample is
/// identical.
pub fn maximize_a(coefficient: &CoefficientA, s_max: f64, t_max: f64) -> Result<f64> {
    if !(s_max >= 0.0 && t_max >= 0.0) {
        return Err(Error::ParameterOutOfRange {
            name: "s_max/t_max",
            value: s_max.min(t_max),
            range: "[0, inf)".into(),
        });
    }
    let mut lo = [0.0, 0.0];
    let mut hi = [s_max, t_max];
    let full = hi;
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    let mut lowest = f64::INFINITY;
    let mut samples = COARSE_SAMPLES;
    for round in 0..=REFINE_ROUNDS {
        let step = [
            (hi[0] - lo[0]) / (samples - 1) as f64,
            (hi[1] - lo[1]) / (samples - 1) as f64,
        ];
        for i in 0..samples {
            let s = if i + 1 == samples { hi[0] } else { lo[0] + i as f64 * step[0] };
            for j in 0..samples {
                let t = if j + 1 == samples { hi[1] } else { lo[1] + j as f64 * step[1] };
                let value = coefficient.eval(s, t)?;
                lowest = lowest.min(value);
                if value > best.0 {
                    best = (value, [s, t]);
                }
            }
        }
        if round == REFINE_ROUNDS {
            break;
        }
        for k in 0..2 {
            lo[k] = (best.1[k] - step[k]).max(0.0);
            hi[k] = (best.1[k] + step[k]).min(full[k]);
        }
        samples = 2 * REFINE_FACTOR + 1;
    }
    if lowest == best.0 {
        return Ok(best.0);
    }
    Ok(best.0 * (1.0 + MAX_INFLATION))
}

/// The shrink factor `r_M = (1/M)^{Σ_k α^k}` with `0⁰ = 1`.
///
/// Returns 1 for `M = 1`, `M^{-1/(1-α)}` for `0 ≤ α < 1`, and 0 for
/// `α ≥ 1` (divergent series). Results below the smallest normal `f64`
/// are flushed to zero.
pub fn compute_r_m(m_const: f64, alpha: f64) -> Result<f64> {
    if !(m_const >= 1.0) || !m_const.is_finite() {
        return Err(Error::InvalidM(m_const));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::UnsupportedAlpha(alpha));
    }
    if m_const == 1.0 {
        return Ok(1.0);
    }
    if alpha >= 1.0 {
        return Ok(0.0);
    }
    let r = m_const.powf(-1.0 / (1.0 - alpha));
    Ok(if r < f64::MIN_POSITIVE { 0.0 } else { r })
}

const G_MAX_SAMPLES: usize = 256;

/// `max g(x, s)` over interior nodes and `s ∈ [0, max ψ]`, with one
/// refinement of the s-grid around the maximizer.
pub fn g_max(g: &NonlinearityG, grid: &Grid, psi: &Field) -> f64 {
    let top = psi.max().max(0.0);
    let step = top / (G_MAX_SAMPLES - 1) as f64;
    let s_at = |k: usize| if k + 1 == G_MAX_SAMPLES { top } else { k as f64 * step };
    let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
    for (i, x) in grid.points().enumerate() {
        for k in 0..G_MAX_SAMPLES {
            let s = s_at(k);
            let v = g.eval(x, s);
            if v > best.0 {
                best = (v, i, s);
            }
            if top == 0.0 {
                break;
            }
        }
    }
    if top > 0.0 {
        let x = grid.point(best.1);
        let lo = (best.2 - step).max(0.0);
        let hi = (best.2 + step).min(top);
        let fine = (hi - lo) / (G_MAX_SAMPLES - 1) as f64;
        for k in 0..G_MAX_SAMPLES {
            let v = g.eval(x, lo + k as f64 * fine);
            if v > best.0 {
                best.0 = v;
            }
        }
    }
    best.0
}

/// `T(v) = (-Δ_h)⁻¹ g(·, v) / A(‖v‖_p, ‖∇v‖₂)`.
pub fn apply_t(spec: &ProblemSpec, green: &GreenOperator, v: &Field) -> Result<Field> {
    v.check_on(spec.grid())?;
    let a = spec.coefficient_at(v)?;
    let rhs = spec.nonlinearity().on_field(v)?;
    let w = green.solve_poisson(&rhs)?;
    Ok(w.scaled(1.0 / a))
}

/// Outcome of [`verify_invariance`].
#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub pass: bool,
    #[serde(rename = "M")]
    pub m_const: f64,
    #[serde(rename = "r_M")]
    pub r_m: f64,
    pub samples: usize,
    pub violations: usize,
    /// Largest excess over `[r_M φ - ε, ψ + ε]`; negative when every image
    /// stays strictly inside.
    pub worst_excess: f64,
    pub epsilon: f64,
}

/// Draws `trials` seeded fields from `[r_M φ, ψ]` plus both endpoints and
/// checks that `T` maps each of them back into the interval.
pub fn verify_invariance(
    spec: &ProblemSpec,
    green: &GreenOperator,
    interval: &OrderInterval,
    trials: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    let env = InvariantEnvelope::new(spec, interval)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let width = env.upper.zip_map(&env.lower, |hi, lo| hi - lo)?;
    let mut check = |w: &Field| -> Result<()> {
        let excess = env.excess(&apply_t(spec, green, w)?);
        if excess > 0.0 {
            violations += 1;
        }
        worst = worst.max(excess);
        Ok(())
    };
    check(&env.lower)?;
    check(&env.upper)?;
    for _ in 0..trials {
        let values = env
            .lower
            .values()
            .iter()
            .zip(width.values())
            .map(|(lo, span)| lo + rng.random::<f64>() * span)
            .collect();
        check(&Field::new(spec.grid(), values)?)?;
    }
    Ok(InvarianceReport {
        pass: violations == 0,
        m_const: env.m_const,
        r_m: env.r_m,
        samples: trials + 2,
        violations,
        worst_excess: worst,
        epsilon: env.slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LeftInterval,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Converged => "converged",
            Self::MaxIter => "max-iter",
            Self::LeftInterval => "left-interval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPoint {
    /// The lower end `r_M φ` of the invariant interval.
    PhiEnd,
    PsiEnd,
    Midpoint,
}

impl std::str::FromStr for StartPoint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "phi-end" | "phi" => Ok(Self::PhiEnd),
            "psi-end" | "psi" => Ok(Self::PsiEnd),
            "midpoint" | "mid" => Ok(Self::Midpoint),
            other => Err(format!(
                "unknown start {other:?} (expected phi-end, psi-end or midpoint)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Mann relaxation `θ ∈ (0, 1]`; 1 is plain Picard.
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub start: StartPoint,
    /// Drop to `θ = 0.5` once the step size fails to decrease for five
    /// consecutive iterations.
    pub oscillation_fallback: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            theta: 1.0,
            tol: 1e-10,
            max_iter: 10_000,
            start: StartPoint::PsiEnd,
            oscillation_fallback: true,
        }
    }
}

const OSCILLATION_RUN: usize = 5;
const FALLBACK_THETA: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: Field,
    pub status: SolveStatus,
    pub iterations: usize,
    pub sup_diff_history: Vec<f64>,
    /// `‖A(‖u‖_p, ‖∇u‖₂)(-Δ_h u) - g(·, u)‖_∞ / (1 + G)` on the working problem.
    pub residual: f64,
    pub m_const: f64,
    pub r_m: f64,
    pub norms: Norms,
    /// Relaxation in effect when the iteration stopped.
    pub theta: f64,
    pub g_max: f64,
}

#[derive(Serialize)]
struct SolveReportJson<'a> {
    status: &'static str,
    iterations: usize,
    residual: f64,
    #[serde(rename = "M")]
    m_const: f64,
    #[serde(rename = "r_M")]
    r_m: f64,
    norms: Norms,
    history: &'a [f64],
}

impl SolveReport {
    /// JSON document with keys `status, iterations, residual, M, r_M, norms, history`.
    pub fn to_json(&self) -> String {
        let doc = SolveReportJson {
            status: self.status.as_str(),
            iterations: self.iterations,
            residual: self.residual,
            m_const: self.m_const,
            r_m: self.r_m,
            norms: self.norms,
            history: &self.sup_diff_history,
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

/// Mann-relaxed Picard iteration `u ← (1-θ)u + θ T(u)` inside `[r_M φ, ψ]`.
pub fn fixed_point_solve(
    spec: &ProblemSpec,
    green: &GreenOperator,
    interval: &OrderInterval,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    if !(opts.theta > 0.0 && opts.theta <= 1.0) {
        return Err(Error::ParameterOutOfRange {
            name: "theta",
            value: opts.theta,
            range: "(0, 1]".into(),
        });
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::ParameterOutOfRange {
            name: "tol/max_iter",
            value: opts.tol,
            range: "tol > 0, max_iter >= 1".into(),
        });
    }
    let env = InvariantEnvelope::new(spec, interval)?;
    let stop = opts.tol * (1.0 + interval.psi.sup_norm());
    let mut u = match opts.start {
        StartPoint::PhiEnd => env.lower.clone(),
        StartPoint::PsiEnd => env.upper.clone(),
        StartPoint::Midpoint => env.lower.zip_map(&env.upper, |a, b| 0.5 * (a + b))?,
    };
    let mut theta = opts.theta;
    let mut history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut run = 0;
    for _ in 0..opts.max_iter {
        let tu = apply_t(spec, green, &u)?;
        let next = if theta == 1.0 {
            tu
        } else {
            u.zip_map(&tu, |a, b| (1.0 - theta) * a + theta * b)?
        };
        let diff = next.sup_distance(&u)?;
        let prev = history.last().copied();
        history.push(diff);
        u = next;
        if !env.contains(&u) {
            status = SolveStatus::LeftInterval;
            break;
        }
        if diff < stop {
            status = SolveStatus::Converged;
            break;
        }
        match prev {
            Some(p) if diff >= p => run += 1,
            _ => run = 0,
        }
        if opts.oscillation_fallback && run >= OSCILLATION_RUN && theta > FALLBACK_THETA {
            theta = FALLBACK_THETA;
            run = 0;
        }
    }
    let g_max = g_max(spec.nonlinearity(), spec.grid(), &interval.psi);
    let residual = equation_residual(spec, &u)? / (1.0 + g_max);
    Ok(SolveReport {
        norms: spec.norms(&u)?,
        u,
        status,
        iterations: history.len(),
        sup_diff_history: history,
        residual,
        m_const: env.m_const,
        r_m: env.r_m,
        theta,
        g_max,
    })
}

/// `‖A(‖u‖_p, ‖∇u‖₂)(-Δ_h u) - g(·, u)‖_∞` for the working problem.
pub fn equation_residual(spec: &ProblemSpec, u: &Field) -> Result<f64> {
    let a = spec.coefficient_at(u)?;
    let lu = apply_laplacian(spec.grid(), u)?;
    let g = spec.nonlinearity().on_field(u)?;
    Ok(lu
        .values()
        .iter()
        .zip(g.values())
        .fold(0.0, |m, (l, g)| m.max((a * l - g).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn interval_grid(n: usize) -> Arc<Grid> {
        Grid::build(vec![(0.0, 1.0)], vec![n]).unwrap()
    }

    fn unit_problem(grid: &Arc<Grid>) -> ProblemSpec {
        ProblemSpec::new(
            grid,
            CoefficientA::constant(1.0).unwrap(),
            NonlinearityG::new(|_, _| 1.0),
            2.0,
        )
        .unwrap()
    }

    #[test]
    fn coefficient_below_bound_is_an_error() {
        let a = CoefficientA::new(1.0, |s, _| 1.0 - s).unwrap();
        assert!(a.eval(0.0, 0.0).is_ok());
        assert!(matches!(
            a.eval(0.5, 0.0),
            Err(Error::CoefficientBelowBound { .. })
        ));
        assert!(CoefficientA::new(0.0, |_, _| 1.0).is_err());
    }

    #[test]
    fn normalization_divides_by_lower_bound() {
        let g = interval_grid(16);
        let spec = ProblemSpec::new(
            &g,
            CoefficientA::new(4.0, |_, t| 4.0 + t).unwrap(),
            NonlinearityG::new(|_, s| 8.0 * s),
            2.0,
        )
        .unwrap();
        assert_eq!(spec.coefficient().lower_bound(), 1.0);
        assert_eq!(spec.coefficient().eval(0.0, 2.0).unwrap(), 1.5);
        assert_eq!(spec.nonlinearity().eval(&[0.5], 1.0), 2.0);
        assert_eq!(spec.original_lower_bound(), 4.0);
    }

    #[test]
    fn rejects_norm_exponent_at_most_one() {
        let g = interval_grid(8);
        let a = CoefficientA::constant(1.0).unwrap();
        let nl = NonlinearityG::new(|_, _| 0.0);
        assert!(ProblemSpec::new(&g, a.clone(), nl.clone(), 1.0).is_err());
        assert!(ProblemSpec::new(&g, a, nl, 1.5).is_ok());
    }

    #[test]
    fn maximize_constant_and_monotone() {
        let one = CoefficientA::constant(1.0).unwrap();
        assert_eq!(maximize_a(&one, 2.0, 3.0).unwrap(), 1.0);
        let kirchhoff = CoefficientA::new(1.0, |_, t| 1.0 + t * t).unwrap();
        assert_relative_eq!(maximize_a(&kirchhoff, 1.0, 3.0).unwrap(), 10.0, max_relative = 1e-6);
        assert!(maximize_a(&kirchhoff, 1.0, 3.0).unwrap() >= 10.0);
        assert_eq!(maximize_a(&kirchhoff, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn maximize_interior_maximum_against_dense_scan() {
        let a = CoefficientA::new(1.0, |_, t: f64| 1.0 + t.sin().powi(2)).unwrap();
        let scan = (0..=1_000_000)
            .map(|k| 1.0 + (2.0 * k as f64 / 1e6).sin().powi(2))
            .fold(f64::NEG_INFINITY, f64::max);
        let m = maximize_a(&a, 0.7, 2.0).unwrap();
        assert_relative_eq!(m, scan, max_relative = 1e-6);
        assert_relative_eq!(m, 2.0, max_relative = 1e-6);
    }

    #[test]
    fn maximize_reports_coefficient_below_bound() {
        let a = CoefficientA::new(1.0, |s, _| 2.0 - s).unwrap();
        assert!(matches!(
            maximize_a(&a, 3.0, 1.0),
            Err(Error::CoefficientBelowBound { .. })
        ));
    }

    #[test]
    fn r_m_branches() {
        assert_eq!(compute_r_m(1.0, 0.7).unwrap(), 1.0);
        assert_eq!(compute_r_m(2.0, 0.0).unwrap(), 0.5);
        assert_relative_eq!(compute_r_m(2.0, 0.5).unwrap(), 0.25, max_relative = 1e-15);
        assert_eq!(compute_r_m(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(compute_r_m(2.0, 1.7).unwrap(), 0.0);
        assert!(matches!(compute_r_m(2.0, -0.5), Err(Error::UnsupportedAlpha(_))));
        assert!(matches!(compute_r_m(0.5, 0.5), Err(Error::InvalidM(_))));
    }

    proptest! {
        #[test]
        fn r_m_is_a_fixed_point_of_the_scaling(m in 1.0f64..1000.0, alpha in 0.0f64..2.0) {
            let r = compute_r_m(m, alpha).unwrap();
            let lhs = r.powf(alpha) / m;
            prop_assert!((lhs - r).abs() <= 1e-12 * r.abs().max(lhs.abs()));
        }
    }

    #[test]
    fn g_max_examples() {
        let g = interval_grid(64);
        let psi = Field::constant(&g, 3.0);
        assert_eq!(g_max(&NonlinearityG::new(|_, _| 1.0), &g, &psi), 1.0);
        assert_relative_eq!(
            g_max(&NonlinearityG::new(|_, s| s * s), &g, &psi),
            9.0,
            max_relative = 1e-6
        );
        let sc = NonlinearityG::new(|x, s: f64| s.sin().powi(2) + 12.0 * x[0] - 12.0 * x[0] * x[0] - 2.0);
        let psi = Field::constant(&g, 2.0);
        // dense scan oracle over the same nodes
        let scan = g
            .points()
            .flat_map(|x| (0..=20_000).map(move |k| (x[0], 2.0 * k as f64 / 20_000.0)))
            .map(|(x, s)| s.sin().powi(2) + 12.0 * x - 12.0 * x * x - 2.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let got = g_max(&sc, &g, &psi);
        assert!((got - scan).abs() < 1e-6);
        assert!((got - 2.0).abs() < 1e-4);
    }

    #[test]
    fn t_of_constant_problem_is_torsion() {
        let g = interval_grid(64);
        let green = GreenOperator::new(&g).unwrap();
        let spec = unit_problem(&g);
        let xi = green.torsion_function().unwrap();
        let v = Field::from_fn(&g, |x| (7.0 * x[0]).cos()).unwrap();
        assert!(apply_t(&spec, &green, &v).unwrap().sup_distance(&xi).unwrap() < 1e-15);
    }

    #[test]
    fn t_with_kirchhoff_coefficient() {
        let g = interval_grid(256);
        let green = GreenOperator::new(&g).unwrap();
        let spec = ProblemSpec::new(
            &g,
            CoefficientA::new(1.0, |_, t| 1.0 + t * t).unwrap(),
            NonlinearityG::new(|_, _| 1.0),
            2.0,
        )
        .unwrap();
        let xi = green.torsion_function().unwrap();
        let t0 = apply_t(&spec, &green, &Field::zeros(&g)).unwrap();
        assert!(t0.sup_distance(&xi).unwrap() < 1e-15);
        // ‖∇ξ‖₂² = 1/12 so T(ξ) = ξ / (1 + 1/12)
        let t1 = apply_t(&spec, &green, &xi).unwrap();
        let expected = xi.scaled(12.0 / 13.0);
        assert!(t1.sup_distance(&expected).unwrap() <= 1e-3 * expected.sup_norm());
    }

    #[test]
    fn invariance_of_constant_problem() {
        let g = interval_grid(64);
        let green = GreenOperator::new(&g).unwrap();
        let spec = unit_problem(&g);
        let xi = green.torsion_function().unwrap();
        let interval = OrderInterval::new(Field::zeros(&g), xi.scaled(2.0), 0.0).unwrap();
        let report = verify_invariance(&spec, &green, &interval, 200, 1).unwrap();
        assert!(report.pass);
        assert_eq!(report.violations, 0);
        assert_eq!(report.r_m, 1.0);
        assert_eq!(report.samples, 202);
    }

    #[test]
    fn interval_rejects_bad_ordering() {
        let g = interval_grid(8);
        let one = Field::constant(&g, 1.0);
        assert!(OrderInterval::new(one.clone(), Field::zeros(&g), 0.0).is_err());
        assert!(OrderInterval::new(one.scaled(-1.0), one.clone(), 0.0).is_err());
        assert!(OrderInterval::new_unchecked(one.clone(), Field::zeros(&g), 0.0).is_ok());
    }

    #[test]
    fn constant_problem_converges_immediately() {
        let g = interval_grid(64);
        let green = GreenOperator::new(&g).unwrap();
        let spec = unit_problem(&g);
        let xi = green.torsion_function().unwrap();
        let interval = OrderInterval::new(Field::zeros(&g), xi.scaled(2.0), 0.0).unwrap();
        for start in [StartPoint::PhiEnd, StartPoint::PsiEnd, StartPoint::Midpoint] {
            let report = fixed_point_solve(
                &spec,
                &green,
                &interval,
                &SolveOptions {
                    start,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(report.status, SolveStatus::Converged);
            assert!(report.iterations <= 2);
            assert!(report.residual < 1e-11);
            assert!(report.u.sup_distance(&xi).unwrap() < 1e-14);
        }
    }

    #[test]
    fn linear_problem_contracts_at_half_rate() {
        let g = interval_grid(64);
        let green = GreenOperator::new(&g).unwrap();
        let pair = green.principal_eigenpair(1e-13).unwrap();
        let lambda = pair.lambda1 / 2.0;
        let spec = ProblemSpec::new(
            &g,
            CoefficientA::constant(1.0).unwrap(),
            NonlinearityG::new(move |_, s| lambda * s),
            2.0,
        )
        .unwrap();
        let interval = OrderInterval::new(Field::zeros(&g), pair.phi1.clone(), 0.0).unwrap();
        let report = fixed_point_solve(&spec, &green, &interval, &SolveOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(report.u.sup_norm() < 1e-9);
        let h = &report.sup_diff_history;
        assert!(h.len() > 11);
        for k in 10..h.len() {
            assert!((h[k] / h[k - 1] - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn leaving_the_interval_is_reported() {
        let g = interval_grid(32);
        let green = GreenOperator::new(&g).unwrap();
        let spec = ProblemSpec::new(
            &g,
            CoefficientA::constant(1.0).unwrap(),
            NonlinearityG::new(|_, _| 10.0),
            2.0,
        )
        .unwrap();
        let xi = green.torsion_function().unwrap();
        let interval = OrderInterval::new(Field::zeros(&g), xi.clone(), 0.0).unwrap();
        let report = fixed_point_solve(&spec, &green, &interval, &SolveOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::LeftInterval);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn max_iter_and_bad_options() {
        let g = interval_grid(32);
        let green = GreenOperator::new(&g).unwrap();
        let pair = green.principal_eigenpair(1e-13).unwrap();
        let lambda = 0.9 * pair.lambda1;
        let spec = ProblemSpec::new(
            &g,
            CoefficientA::constant(1.0).unwrap(),
            NonlinearityG::new(move |_, s| lambda * s),
            2.0,
        )
        .unwrap();
        let interval = OrderInterval::new(Field::zeros(&g), pair.phi1, 0.0).unwrap();
        let opts = SolveOptions {
            max_iter: 3,
            ..Default::default()
        };
        let report = fixed_point_solve(&spec, &green, &interval, &opts).unwrap();
        assert_eq!(report.status, SolveStatus::MaxIter);
        assert_eq!(report.iterations, 3);
        let bad = SolveOptions {
            theta: 0.0,
            ..Default::default()
        };
        assert!(fixed_point_solve(&spec, &green, &interval, &bad).is_err());
    }

    #[test]
    fn report_json_key_order() {
        let g = interval_grid(16);
        let green = GreenOperator::new(&g).unwrap();
        let spec = unit_problem(&g);
        let xi = green.torsion_function().unwrap();
        let interval = OrderInterval::new(Field::zeros(&g), xi.scaled(2.0), 0.0).unwrap();
        let report = fixed_point_solve(&spec, &green, &interval, &SolveOptions::default()).unwrap();
        let json = report.to_json();
        let keys = ["\"status\"", "\"iterations\"", "\"residual\"", "\"M\"", "\"r_M\"", "\"norms\"", "\"history\""];
        let pos: Vec<usize> = keys.iter().map(|k| json.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["status"], "converged");
        assert!(v["norms"]["h1"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn start_point_parses() {
        assert_eq!("psi-end".parse::<StartPoint>().unwrap(), StartPoint::PsiEnd);
        assert_eq!("midpoint".parse::<StartPoint>().unwrap(), StartPoint::Midpoint);
        assert!("nowhere".parse::<StartPoint>().is_err());
    }
}
