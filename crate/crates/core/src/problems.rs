//! Discrete sub/supersolution checks and builders for four model problems:
//!
//! | builder      | equation                                               | α |
//! |--------------|--------------------------------------------------------|---|
//! | [`Example1`] | `-(1 + d‖u‖₂²) Δu = u^p + λ f(x)`                      | 0 |
//! | [`Example2`] | `-(1 + c‖u‖₂² + d‖∇u‖₂²) Δu = μ u^q + u^p`             | q |
//! | [`Example3`] | `-(1 + d sin²(‖∇u‖₂)) Δu = sin²(u) + f(x)`             | 0 |
//! | [`Example4`] | `-(1 + d‖∇u‖₂²) Δu = μ u^q + π sin³(u)`                | q |
//!
//! Each builder derives its constants from the torsion function `ξ` (and the
//! principal eigenpair where needed) on the build grid. Strict inequalities
//! are kept strict under discretization by shrinking the closed-form
//! supremum with a safety factor `σ < 1`.
//!
//! Builders produce a [`ProblemCandidate`]; [`ProblemCandidate::certify`]
//! runs both structural checks and only then yields a [`BuiltProblem`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::elliptic::{h1_seminorm, lp_norm, GreenOperator};
use crate::error::{Error, Result};
use crate::grid::{apply_laplacian, Field, Grid};
use crate::nonlocal::{g_max, CoefficientA, NonlinearityG, OrderInterval, ProblemSpec};

/// Result of the nodewise sub/supersolution check.
#[derive(Debug, Clone, Serialize)]
pub struct G1Report {
    pub pass: bool,
    /// `min_i g(x_i, φ_i) - (-Δ_h φ)_i`.
    pub sub_margin: f64,
    /// `min_i (-Δ_h ψ)_i - g(x_i, ψ_i)`.
    pub super_margin: f64,
    /// `min_i min(φ_i, ψ_i - φ_i)`.
    pub order_margin: f64,
    pub worst_margin: f64,
    pub eta: f64,
}

/// `(-Δ_h φ) ≤ g(·, φ)`, `(-Δ_h ψ) ≥ g(·, ψ)` and `0 ≤ φ ≤ ψ`, each up to
/// the slack `η = 1e-9 (1 + G)`.
pub fn check_g1(grid: &Grid, g: &NonlinearityG, interval: &OrderInterval) -> Result<G1Report> {
    let eta = 1e-9 * (1.0 + g_max(g, grid, &interval.psi));
    let lphi = apply_laplacian(grid, &interval.phi)?;
    let lpsi = apply_laplacian(grid, &interval.psi)?;
    let mut sub = f64::INFINITY;
    let mut sup = f64::INFINITY;
    let mut order = f64::INFINITY;
    for (i, x) in grid.points().enumerate() {
        let phi = interval.phi.values()[i];
        let psi = interval.psi.values()[i];
        sub = sub.min(g.eval(x, phi) - lphi.values()[i]);
        sup = sup.min(lpsi.values()[i] - g.eval(x, psi));
        order = order.min(phi.min(psi - phi));
    }
    let order_slack = interval.slack();
    let pass = sub >= -eta && sup >= -eta && order >= -order_slack;
    Ok(G1Report {
        pass,
        sub_margin: sub,
        super_margin: sup,
        order_margin: order,
        worst_margin: sub.min(sup).min(order),
        eta,
    })
}

#[derive(Debug, Clone)]
pub struct G2Options {
    pub beta_levels: Vec<f64>,
    pub omega_trials: usize,
    pub seed: u64,
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            beta_levels: (0..=10).map(|k| 0.5f64.powi(k)).collect(),
            omega_trials: 200,
            seed: 0,
        }
    }
}

impl G2Options {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// Result of the sampled β-scaling check.
#[derive(Debug, Clone, Serialize)]
pub struct G2Report {
    pub pass: bool,
    /// `min g(x_i, ω_i) - β^α (-Δ_h φ)_i` over all samples.
    pub lower_margin: f64,
    /// `min (-Δ_h ψ)_i - g(x_i, ω_i)` over all samples.
    pub upper_margin: f64,
    pub worst_margin: f64,
    pub worst_beta: f64,
    pub samples: usize,
    pub eta: f64,
}

/// Sampled check of `β^α (-Δ_h φ) ≤ g(·, ω) ≤ -Δ_h ψ` for `ω ∈ [βφ, ψ]`.
///
/// For every `β` in the ladder the endpoints `ω = βφ`, `ω = ψ` and
/// `omega_trials` seeded random fields between them are tested. This is
/// evidence, not a proof: the condition quantifies over infinitely many `ω`.
pub fn check_g2(
    grid: &Grid,
    g: &NonlinearityG,
    interval: &OrderInterval,
    opts: &G2Options,
) -> Result<G2Report> {
    let eta = 1e-9 * (1.0 + g_max(g, grid, &interval.psi));
    let lphi = apply_laplacian(grid, &interval.phi)?;
    let lpsi = apply_laplacian(grid, &interval.psi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    let mut worst = (f64::INFINITY, 1.0);
    let mut samples = 0;
    let n = grid.len();
    let mut omega = vec![0.0; n];
    for &beta in &opts.beta_levels {
        let scale = beta.powf(interval.alpha);
        for trial in 0..opts.omega_trials + 2 {
            for i in 0..n {
                let lo = beta * interval.phi.values()[i];
                let hi = interval.psi.values()[i];
                omega[i] = match trial {
                    0 => lo,
                    1 => hi,
                    _ => lo + rng.random::<f64>() * (hi - lo),
                };
            }
            samples += 1;
            for (i, x) in grid.points().enumerate() {
                let gv = g.eval(x, omega[i]);
                let lo_m = gv - scale * lphi.values()[i];
                let hi_m = lpsi.values()[i] - gv;
                lower = lower.min(lo_m);
                upper = upper.min(hi_m);
                let m = lo_m.min(hi_m);
                if m < worst.0 {
                    worst = (m, beta);
                }
            }
        }
    }
    Ok(G2Report {
        pass: lower >= -eta && upper >= -eta,
        lower_margin: lower,
        upper_margin: upper,
        worst_margin: worst.0,
        worst_beta: worst.1,
        samples,
        eta,
    })
}

/// Forcing term `f(x)` for the inhomogeneous examples.
#[derive(Clone)]
pub struct Forcing {
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Forcing({})", self.label)
    }
}

impl Forcing {
    pub fn new(label: impl Into<String>, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            label: label.into(),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(format!("constant:{value}"), move |_| value)
    }

    /// `12x - 12x² - 2`, the negative Laplacian of `x²(1-x)²` on `(0, 1)`.
    /// Sign-changing, with a nonnegative Dirichlet solution.
    pub fn poly_signchanging() -> Self {
        Self::new("poly-signchanging", |x| 12.0 * x[0] - 12.0 * x[0] * x[0] - 2.0)
    }

    /// Piecewise-linear interpolation of `(x, f)` samples in the first
    /// coordinate, held constant beyond the end points.
    pub fn tabulated(label: impl Into<String>, table: Vec<(f64, f64)>) -> Result<Self> {
        if table.len() < 2 {
            return Err(Error::InfeasibleForcing("a table needs at least two rows".into()));
        }
        if table.iter().any(|(x, f)| !x.is_finite() || !f.is_finite()) {
            return Err(Error::InfeasibleForcing("table contains non-finite values".into()));
        }
        if table.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InfeasibleForcing("table abscissae must increase strictly".into()));
        }
        Ok(Self::new(label, move |x| {
            let x = x[0];
            let k = table.partition_point(|(xi, _)| *xi <= x);
            match k {
                0 => table[0].1,
                k if k == table.len() => table[k - 1].1,
                k => {
                    let (x0, f0) = table[k - 1];
                    let (x1, f1) = table[k];
                    f0 + (f1 - f0) * (x - x0) / (x1 - x0)
                }
            }
        }))
    }

    /// Reads a table with one `x f` pair per line, separated by a comma or
    /// whitespace. Blank lines, `#` comments and a non-numeric header row
    /// are skipped.
    pub fn parse_table(label: impl Into<String>, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|c| !c.is_empty())
                .collect();
            let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
            match parsed.as_deref() {
                Some([x, f]) => rows.push((*x, *f)),
                None if rows.is_empty() && idx == raw_index_of_first(text) => continue,
                _ => {
                    return Err(Error::InfeasibleForcing(format!(
                        "line {}: expected two numbers, got `{line}`",
                        idx + 1
                    )))
                }
            }
        }
        Self::tabulated(label, rows)
    }

    /// `constant:<v>` or `poly-signchanging`.
    pub fn preset(name: &str) -> Result<Self> {
        if name == "poly-signchanging" {
            return Ok(Self::poly_signchanging());
        }
        if let Some(v) = name.strip_prefix("constant:") {
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InfeasibleForcing(format!("bad constant in `{name}`")))?;
            if !value.is_finite() {
                return Err(Error::InfeasibleForcing(format!("bad constant in `{name}`")));
            }
            return Ok(Self::constant(value));
        }
        Err(Error::InfeasibleForcing(format!(
            "unknown forcing `{name}` (expected constant:<v>, poly-signchanging or a table file)"
        )))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sample(&self, grid: &Arc<Grid>) -> Result<Field> {
        Field::from_fn(grid, |x| self.eval(x))
    }
}

/// Index of the first line that is not blank or a comment.
fn raw_index_of_first(text: &str) -> usize {
    text.lines()
        .position(|l| !l.split('#').next().unwrap_or("").trim().is_empty())
        .unwrap_or(0)
}

/// `w^e` extended by zero to negative `w`.
fn pos_pow(w: f64, e: f64) -> f64 {
    if w > 0.0 {
        w.powf(e)
    } else {
        0.0
    }
}

/// Solves `-Δ_h φ₀ = f` and requires `φ₀ ≥ 0` (up to roundoff) and `f ≠ 0`.
fn nonnegative_potential(green: &GreenOperator, f: &Forcing) -> Result<(Field, Field)> {
    let f_field = f.sample(green.grid())?;
    if f_field.sup_norm() == 0.0 {
        return Err(Error::InfeasibleForcing(format!(
            "{} vanishes on the grid; a nonzero forcing is required",
            f.label()
        )));
    }
    let phi0 = green.solve_poisson(&f_field)?;
    let floor = -1e-12 * (1.0 + phi0.sup_norm());
    if phi0.min() < floor {
        return Err(Error::InfeasibleForcing(format!(
            "solution of -Δφ = {} has minimum {} < 0",
            f.label(),
            phi0.min()
        )));
    }
    Ok((phi0.map(|v| v.max(0.0)), f_field))
}

fn check_exponent(name: &str, value: f64, ok: bool, range: &str) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(format!("{name} = {value} must lie in {range}")))
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value,
            range: "(0, inf)".into(),
        })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "sigma",
            value: sigma,
            range: "(0, 1)".into(),
        })
    }
}

fn check_below_threshold(name: &'static str, value: f64, threshold: f64) -> Result<()> {
    if value > 0.0 && value < threshold {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name,
            value,
            range: format!("(0, {threshold})"),
        })
    }
}

/// Largest admissible parameter and its name (`lambda_f` or `mu_0`).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Threshold {
    pub name: &'static str,
    pub value: f64,
}

/// A problem and candidate interval that have not been checked yet.
#[derive(Debug, Clone)]
pub struct ProblemCandidate {
    pub name: &'static str,
    pub spec: ProblemSpec,
    pub interval: OrderInterval,
    pub threshold: Option<Threshold>,
    /// The requested `λ` or `μ`, when the problem has one.
    pub parameter: Option<f64>,
    pub constants: Vec<(&'static str, f64)>,
    /// `(1 + c‖ψ‖₂² + d‖∇ψ‖₂²)^{-1/(1-q)}` for the concave examples, whose
    /// product with `φ` bounds the solution from below.
    pub lower_bound_factor: Option<f64>,
}

impl ProblemCandidate {
    pub fn check(&self, opts: &G2Options) -> Result<(G1Report, G2Report)> {
        let grid = self.spec.grid();
        let g = self.spec.nonlinearity();
        Ok((
            check_g1(grid, g, &self.interval)?,
            check_g2(grid, g, &self.interval, opts)?,
        ))
    }

    /// Runs both structural checks; fails unless both pass.
    pub fn certify(self, opts: &G2Options) -> Result<BuiltProblem> {
        let (g1, g2) = self.check(opts)?;
        if !(g1.pass && g2.pass) {
            return Err(Error::ConditionsFailed(format!(
                "{}: G1 pass={} (worst margin {:.3e}), G2 pass={} (worst margin {:.3e})",
                self.name, g1.pass, g1.worst_margin, g2.pass, g2.worst_margin
            )));
        }
        Ok(BuiltProblem {
            candidate: self,
            g1,
            g2,
        })
    }
}

/// A problem whose interval passed both structural checks on its grid.
#[derive(Debug, Clone)]
pub struct BuiltProblem {
    candidate: ProblemCandidate,
    pub g1: G1Report,
    pub g2: G2Report,
}

impl std::ops::Deref for BuiltProblem {
    type Target = ProblemCandidate;

    fn deref(&self) -> &ProblemCandidate {
        &self.candidate
    }
}

impl BuiltProblem {
    pub fn into_candidate(self) -> ProblemCandidate {
        self.candidate
    }
}

/// Carrier problem `-(1 + d‖u‖₂²) Δu = u^p + λ f(x)`.
#[derive(Debug, Clone)]
pub struct Example1 {
    grid: Arc<Grid>,
    forcing: Forcing,
    phi0: Field,
    xi: Field,
    power: f64,
    d: f64,
    sigma: f64,
    pub xi_max: f64,
    pub f_abs_max: f64,
    pub m0: f64,
    pub lambda_f: f64,
}

impl Example1 {
    pub fn new(green: &GreenOperator, forcing: Forcing, power: f64, d: f64, sigma: f64) -> Result<Self> {
        check_exponent("p", power, power > 1.0, "(1, inf)")?;
        check_positive("d", d)?;
        check_sigma(sigma)?;
        let (phi0, f_field) = nonnegative_potential(green, &forcing)?;
        let xi = green.torsion_function()?;
        let xi_max = xi.max();
        let f_abs_max = f_field.sup_norm();
        // largest M₀ with M₀ > M₀^p (max ξ^p + max|f|), shrunk by σ
        let m0 = sigma * (xi_max.powf(power) + f_abs_max).powf(-1.0 / (power - 1.0));
        Ok(Self {
            grid: Arc::clone(green.grid()),
            forcing,
            phi0,
            xi,
            power,
            d,
            sigma,
            xi_max,
            f_abs_max,
            m0,
            lambda_f: m0.powf(power),
        })
    }

    pub fn threshold(&self) -> Threshold {
        Threshold {
            name: "lambda_f",
            value: self.lambda_f,
        }
    }

    /// `φ = λ φ₀`, `ψ = M₀ ξ`; `λ` is not range-checked here.
    pub fn candidate(&self, lambda: f64) -> Result<ProblemCandidate> {
        check_positive("lambda", lambda)?;
        let d = self.d;
        let power = self.power;
        let forcing = self.forcing.clone();
        let spec = ProblemSpec::new(
            &self.grid,
            CoefficientA::new(1.0, move |s, _| 1.0 + d * s * s)?,
            NonlinearityG::new(move |x, w| pos_pow(w, power) + lambda * forcing.eval(x)),
            2.0,
        )?;
        let interval = OrderInterval::new_unchecked(self.phi0.scaled(lambda), self.xi.scaled(self.m0), 0.0)?;
        Ok(ProblemCandidate {
            name: "example1",
            spec,
            interval,
            threshold: Some(self.threshold()),
            parameter: Some(lambda),
            constants: vec![
                ("p", self.power),
                ("d", self.d),
                ("sigma", self.sigma),
                ("lambda", lambda),
                ("xi_max", self.xi_max),
                ("f_abs_max", self.f_abs_max),
                ("M0", self.m0),
                ("lambda_f", self.lambda_f),
            ],
            lower_bound_factor: None,
        })
    }

    /// Candidate for `λ ∈ (0, λ_f)`, certified.
    pub fn build(&self, lambda: f64, opts: &G2Options) -> Result<BuiltProblem> {
        check_below_threshold("lambda", lambda, self.lambda_f)?;
        self.candidate(lambda)?.certify(opts)
    }
}

/// Shared sub-solution scale for the concave examples:
/// `σ · min((μ/λ₁)^{1/(1-q)}, min ψ/φ₁)`.
fn eigen_scale(mu: f64, q: f64, lambda1: f64, phi1: &Field, psi: &Field, sigma: f64) -> f64 {
    let growth = (mu / lambda1).powf(1.0 / (1.0 - q));
    let fit = psi
        .values()
        .iter()
        .zip(phi1.values())
        .map(|(s, p)| s / p)
        .fold(f64::INFINITY, f64::min);
    sigma * growth.min(fit)
}

/// Concave-convex problem `-(1 + c‖u‖₂² + d‖∇u‖₂²) Δu = μ u^q + u^p`.
#[derive(Debug, Clone)]
pub struct Example2 {
    grid: Arc<Grid>,
    xi: Field,
    phi1: Field,
    pub lambda1: f64,
    c: f64,
    d: f64,
    q: f64,
    power: f64,
    sigma: f64,
    pub xi_max: f64,
    pub m1: f64,
    pub mu0: f64,
}

impl Example2 {
    pub fn new(green: &GreenOperator, c: f64, d: f64, q: f64, power: f64, sigma: f64) -> Result<Self> {
        check_exponent("q", q, q > 0.0 && q < 1.0, "(0, 1)")?;
        check_exponent("p", power, power > 1.0, "(1, inf)")?;
        check_positive("c", c)?;
        check_positive("d", d)?;
        check_sigma(sigma)?;
        let xi = green.torsion_function()?;
        let xi_max = xi.max();
        let pair = green.principal_eigenpair(1e-12)?;
        let m1 = sigma * xi_max.powf(power).powf(-1.0 / (power - 1.0));
        let mu0 = (m1 - m1.powf(power) * xi_max.powf(power)) / (m1.powf(q) * xi_max.powf(q));
        Ok(Self {
            grid: Arc::clone(green.grid()),
            xi,
            phi1: pair.phi1,
            lambda1: pair.lambda1,
            c,
            d,
            q,
            power,
            sigma,
            xi_max,
            m1,
            mu0,
        })
    }

    pub fn threshold(&self) -> Threshold {
        Threshold {
            name: "mu_0",
            value: self.mu0,
        }
    }

    pub fn candidate(&self, mu: f64) -> Result<ProblemCandidate> {
        check_positive("mu", mu)?;
        let (c, d, q, power) = (self.c, self.d, self.q, self.power);
        let psi = self.xi.scaled(self.m1);
        let m0 = eigen_scale(mu, q, self.lambda1, &self.phi1, &psi, self.sigma);
        let psi_l2 = lp_norm(&psi, 2.0)?;
        let psi_h1 = h1_seminorm(&psi);
        let factor = (1.0 + c * psi_l2 * psi_l2 + d * psi_h1 * psi_h1).powf(-1.0 / (1.0 - q));
        let spec = ProblemSpec::new(
            &self.grid,
            CoefficientA::new(1.0, move |s, t| 1.0 + c * s * s + d * t * t)?,
            NonlinearityG::new(move |_, w| mu * pos_pow(w, q) + pos_pow(w, power)),
            2.0,
        )?;
        let interval = OrderInterval::new_unchecked(self.phi1.scaled(m0), psi, q)?;
        Ok(ProblemCandidate {
            name: "example2",
            spec,
            interval,
            threshold: Some(self.threshold()),
            parameter: Some(mu),
            constants: vec![
                ("c", c),
                ("d", d),
                ("q", q),
                ("p", power),
                ("sigma", self.sigma),
                ("mu", mu),
                ("xi_max", self.xi_max),
                ("lambda1", self.lambda1),
                ("M0", m0),
                ("M1", self.m1),
                ("mu_0", self.mu0),
            ],
            lower_bound_factor: Some(factor),
        })
    }

    pub fn build(&self, mu: f64, opts: &G2Options) -> Result<BuiltProblem> {
        check_below_threshold("mu", mu, self.mu0)?;
        self.candidate(mu)?.certify(opts)
    }
}

/// Non-monotone problem `-(1 + d sin²(‖∇u‖₂)) Δu = sin²(u) + f(x)`.
///
/// The coefficient ignores its `s` argument; the norm exponent is fixed at 2.
#[derive(Debug, Clone)]
pub struct Example3 {
    grid: Arc<Grid>,
    forcing: Forcing,
    phi0: Field,
    xi: Field,
    d: f64,
    pub f_abs_max: f64,
    pub m0: f64,
}

/// Margin added to `1 + max|f|` when choosing the supersolution scale.
const EXAMPLE3_MARGIN: f64 = 0.1;

impl Example3 {
    pub fn new(green: &GreenOperator, forcing: Forcing, d: f64) -> Result<Self> {
        check_positive("d", d)?;
        let (phi0, f_field) = nonnegative_potential(green, &forcing)?;
        let f_abs_max = f_field.sup_norm();
        Ok(Self {
            grid: Arc::clone(green.grid()),
            forcing,
            phi0,
            xi: green.torsion_function()?,
            d,
            f_abs_max,
            m0: 1.0 + f_abs_max + EXAMPLE3_MARGIN,
        })
    }

    pub fn candidate(&self) -> Result<ProblemCandidate> {
        let d = self.d;
        let forcing = self.forcing.clone();
        let spec = ProblemSpec::new(
            &self.grid,
            CoefficientA::new(1.0, move |_, t: f64| 1.0 + d * t.sin().powi(2))?,
            NonlinearityG::new(move |x, w: f64| w.sin().powi(2) + forcing.eval(x)),
            2.0,
        )?;
        let interval = OrderInterval::new_unchecked(self.phi0.clone(), self.xi.scaled(self.m0), 0.0)?;
        Ok(ProblemCandidate {
            name: "example3",
            spec,
            interval,
            threshold: None,
            parameter: None,
            constants: vec![("d", d), ("f_abs_max", self.f_abs_max), ("M0", self.m0)],
            lower_bound_factor: None,
        })
    }

    pub fn build(&self, opts: &G2Options) -> Result<BuiltProblem> {
        self.candidate()?.certify(opts)
    }
}

/// Sign-changing problem `-(1 + d‖∇u‖₂²) Δu = μ u^q + π sin³(u)`.
#[derive(Debug, Clone)]
pub struct Example4 {
    grid: Arc<Grid>,
    xi: Field,
    phi1: Field,
    pub lambda1: f64,
    d: f64,
    q: f64,
    sigma: f64,
    pub xi_max: f64,
    pub m1: f64,
    pub mu0: f64,
}

impl Example4 {
    pub fn new(green: &GreenOperator, d: f64, q: f64, sigma: f64) -> Result<Self> {
        check_exponent("q", q, q > 0.0 && q < 1.0, "(0, 1)")?;
        check_positive("d", d)?;
        check_sigma(sigma)?;
        let xi = green.torsion_function()?;
        let xi_max = xi.max();
        let pair = green.principal_eigenpair(1e-12)?;
        // M₁ > π M₁³ max ξ³ and M₁ max ξ ≤ π/2
        let cubic = (PI * xi_max.powi(3)).powf(-0.5);
        let range = PI / 2.0 / xi_max;
        let m1 = sigma * cubic.min(range);
        let mu0 = (m1 - PI * m1.powi(3) * xi_max.powi(3)) / (m1.powf(q) * xi_max.powf(q));
        Ok(Self {
            grid: Arc::clone(green.grid()),
            xi,
            phi1: pair.phi1,
            lambda1: pair.lambda1,
            d,
            q,
            sigma,
            xi_max,
            m1,
            mu0,
        })
    }

    pub fn threshold(&self) -> Threshold {
        Threshold {
            name: "mu_0",
            value: self.mu0,
        }
    }

    pub fn candidate(&self, mu: f64) -> Result<ProblemCandidate> {
        check_positive("mu", mu)?;
        let (d, q) = (self.d, self.q);
        let psi = self.xi.scaled(self.m1);
        // M₀φ₁ ≤ ψ ≤ π/2 keeps sin(M₀φ₁) ≥ 0
        let m0 = eigen_scale(mu, q, self.lambda1, &self.phi1, &psi, self.sigma);
        let psi_h1 = h1_seminorm(&psi);
        let factor = (1.0 + d * psi_h1 * psi_h1).powf(-1.0 / (1.0 - q));
        let spec = ProblemSpec::new(
            &self.grid,
            CoefficientA::new(1.0, move |_, t| 1.0 + d * t * t)?,
            NonlinearityG::new(move |_, w: f64| mu * pos_pow(w, q) + PI * w.sin().powi(3)),
            2.0,
        )?;
        let interval = OrderInterval::new_unchecked(self.phi1.scaled(m0), psi, q)?;
        Ok(ProblemCandidate {
            name: "example4",
            spec,
            interval,
            threshold: Some(self.threshold()),
            parameter: Some(mu),
            constants: vec![
                ("d", d),
                ("q", q),
                ("sigma", self.sigma),
                ("mu", mu),
                ("xi_max", self.xi_max),
                ("lambda1", self.lambda1),
                ("M0", m0),
                ("M1", self.m1),
                ("mu_0", self.mu0),
            ],
            lower_bound_factor: Some(factor),
        })
    }

    pub fn build(&self, mu: f64, opts: &G2Options) -> Result<BuiltProblem> {
        check_below_threshold("mu", mu, self.mu0)?;
        self.candidate(mu)?.certify(opts)
    }
}

/// Which model problem to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    Example1,
    Example2,
    Example3,
    Example4,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 4] = [
        ExampleKind::Example1,
        ExampleKind::Example2,
        ExampleKind::Example3,
        ExampleKind::Example4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleKind::Example1 => "example1",
            ExampleKind::Example2 => "example2",
            ExampleKind::Example3 => "example3",
            ExampleKind::Example4 => "example4",
        }
    }
}

impl FromStr for ExampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExampleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

/// The `λ` or `μ` of a problem, absolute or as a fraction of its threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parameter {
    Value(f64),
    Fraction(f64),
}

impl Parameter {
    pub fn resolve(self, threshold: f64) -> f64 {
        match self {
            Parameter::Value(v) => v,
            Parameter::Fraction(f) => f * threshold,
        }
    }
}

/// Every knob of the four builders, with the defaults used throughout the
/// tools. Fields a given example does not use are ignored.
#[derive(Debug, Clone)]
pub struct ExampleParams {
    pub kind: ExampleKind,
    /// Examples 1 and 3.
    pub forcing: Forcing,
    /// Growth exponent, examples 1 and 2.
    pub p: f64,
    /// Concave exponent, examples 2 and 4.
    pub q: f64,
    /// Carrier weight, example 2.
    pub c: f64,
    pub d: f64,
    /// Safety factor, examples 1, 2 and 4.
    pub sigma: f64,
    /// `λ` (example 1) or `μ` (examples 2 and 4).
    pub parameter: Parameter,
}

enum Builder {
    E1(Example1),
    E2(Example2),
    E3(Example3),
    E4(Example4),
}

impl ExampleParams {
    /// Sign-changing polynomial forcing, `p = 2`, `q = 1/2`, `c = d = 1`,
    /// `σ = 0.5` (0.9 for example 4) and half the threshold.
    pub fn defaults(kind: ExampleKind) -> Self {
        Self {
            kind,
            forcing: Forcing::poly_signchanging(),
            p: 2.0,
            q: 0.5,
            c: 1.0,
            d: 1.0,
            sigma: if kind == ExampleKind::Example4 { 0.9 } else { 0.5 },
            parameter: Parameter::Fraction(0.5),
        }
    }

    fn builder(&self, green: &GreenOperator) -> Result<Builder> {
        Ok(match self.kind {
            ExampleKind::Example1 => Builder::E1(Example1::new(green, self.forcing.clone(), self.p, self.d, self.sigma)?),
            ExampleKind::Example2 => Builder::E2(Example2::new(green, self.c, self.d, self.q, self.p, self.sigma)?),
            ExampleKind::Example3 => Builder::E3(Example3::new(green, self.forcing.clone(), self.d)?),
            ExampleKind::Example4 => Builder::E4(Example4::new(green, self.d, self.q, self.sigma)?),
        })
    }

    /// `λ_f` or `μ₀` on this grid; `None` for example 3.
    pub fn threshold(&self, green: &GreenOperator) -> Result<Option<Threshold>> {
        Ok(match self.builder(green)? {
            Builder::E1(b) => Some(b.threshold()),
            Builder::E2(b) => Some(b.threshold()),
            Builder::E3(_) => None,
            Builder::E4(b) => Some(b.threshold()),
        })
    }

    fn make(&self, green: &GreenOperator, enforce_range: bool) -> Result<ProblemCandidate> {
        let builder = self.builder(green)?;
        let pick = |name: &'static str, t: Threshold| -> Result<f64> {
            let value = self.parameter.resolve(t.value);
            if enforce_range {
                check_below_threshold(name, value, t.value)?;
            }
            Ok(value)
        };
        match builder {
            Builder::E1(b) => b.candidate(pick("lambda", b.threshold())?),
            Builder::E2(b) => b.candidate(pick("mu", b.threshold())?),
            Builder::E3(b) => b.candidate(),
            Builder::E4(b) => b.candidate(pick("mu", b.threshold())?),
        }
    }

    /// Candidate with the parameter required to lie in `(0, threshold)`.
    pub fn candidate(&self, green: &GreenOperator) -> Result<ProblemCandidate> {
        self.make(green, true)
    }

    /// Candidate for any positive parameter, for probing past the threshold.
    pub fn candidate_unchecked(&self, green: &GreenOperator) -> Result<ProblemCandidate> {
        self.make(green, false)
    }

    pub fn build(&self, green: &GreenOperator, opts: &G2Options) -> Result<BuiltProblem> {
        self.candidate(green)?.certify(opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn green(n: usize) -> GreenOperator {
        GreenOperator::new(&Grid::build(vec![(0.0, 1.0)], vec![n]).unwrap()).unwrap()
    }

    fn opts() -> G2Options {
        G2Options {
            omega_trials: 40,
            ..G2Options::default()
        }
    }

    #[test]
    fn g1_equality_case_and_failure() {
        let green = green(64);
        let grid = green.grid();
        let xi = green.torsion_function().unwrap();
        let one = NonlinearityG::new(|_, _| 1.0);
        let ok = OrderInterval::new(Field::zeros(grid), xi.clone(), 0.0).unwrap();
        let r = check_g1(grid, &one, &ok).unwrap();
        assert!(r.pass);
        assert!(r.super_margin.abs() < 1e-10);
        assert!(r.worst_margin.abs() < 1e-10);
        let half = OrderInterval::new(Field::zeros(grid), xi.scaled(0.5), 0.0).unwrap();
        let r = check_g1(grid, &one, &half).unwrap();
        assert!(!r.pass);
        assert_relative_eq!(r.super_margin, -0.5, epsilon = 1e-9);
    }

    #[test]
    fn g1_reports_ordering_violation() {
        let green = green(32);
        let grid = green.grid();
        let xi = green.torsion_function().unwrap();
        let zero = NonlinearityG::new(|_, _| 0.0);
        let bad = OrderInterval::new_unchecked(xi.scaled(2.0), xi.clone(), 0.0).unwrap();
        let r = check_g1(grid, &zero, &bad).unwrap();
        assert!(!r.pass);
        assert!(r.order_margin < 0.0);
    }

    #[test]
    fn example1_constants_for_constant_forcing() {
        let green = green(256);
        let ex = Example1::new(&green, Forcing::constant(2.0), 2.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(ex.xi_max, 0.125, epsilon = 1e-13);
        let m0 = 0.5 / (1.0 / 64.0 + 2.0);
        assert_relative_eq!(ex.m0, m0, max_relative = 1e-12);
        assert_relative_eq!(ex.m0, 0.24806, epsilon = 1e-5);
        assert_relative_eq!(ex.lambda_f, m0 * m0, max_relative = 1e-12);
        assert_relative_eq!(ex.lambda_f, 0.06153, epsilon = 1e-5);
        let built = ex.build(ex.lambda_f / 2.0, &opts()).unwrap();
        assert!(built.g1.pass && built.g2.pass);
    }

    #[test]
    fn example1_sign_changing_forcing() {
        let green = green(256);
        let ex = Example1::new(&green, Forcing::poly_signchanging(), 2.0, 1.0, 0.5).unwrap();
        let h = 1.0 / 256.0;
        // boundary-adjacent sample |f(h)| = 2 - 12h + 12h²
        assert_relative_eq!(ex.f_abs_max, 2.0 - 12.0 * h + 12.0 * h * h, max_relative = 1e-12);
        assert!((ex.lambda_f / 0.0615 - 1.0).abs() < 20.0 * h);
        let built = ex.build(ex.lambda_f / 2.0, &opts()).unwrap();
        assert!(built.interval.phi.min() >= 0.0);
    }

    #[test]
    fn example1_rejects_bad_inputs() {
        let green = green(64);
        assert!(matches!(
            Example1::new(&green, Forcing::constant(-1.0), 2.0, 1.0, 0.5),
            Err(Error::InfeasibleForcing(_))
        ));
        assert!(matches!(
            Example1::new(&green, Forcing::constant(2.0), 1.0, 1.0, 0.5),
            Err(Error::InvalidExponent(_))
        ));
        let ex = Example1::new(&green, Forcing::constant(2.0), 2.0, 1.0, 0.5).unwrap();
        assert!(matches!(
            ex.build(2.0 * ex.lambda_f, &opts()),
            Err(Error::ParameterOutOfRange { .. })
        ));
    }

    #[test]
    fn example1_certificate_degrades_past_threshold() {
        let green = green(128);
        let ex = Example1::new(&green, Forcing::constant(2.0), 2.0, 1.0, 0.95).unwrap();
        let below = ex.candidate(0.99 * ex.lambda_f).unwrap();
        let (g1, _) = below.check(&opts()).unwrap();
        assert!(g1.pass);
        let above = ex.candidate(1.5 * ex.lambda_f).unwrap();
        let (g1, _) = above.check(&opts()).unwrap();
        assert!(!g1.pass);
        assert!(g1.super_margin < 0.0);
    }

    #[test]
    fn example2_closed_form_threshold() {
        let green = green(256);
        let ex = Example2::new(&green, 1.0, 1.0, 0.5, 2.0, 0.5).unwrap();
        assert_relative_eq!(ex.m1, 32.0, max_relative = 1e-12);
        assert_relative_eq!(ex.mu0, 8.0, max_relative = 1e-10);
        let cand = ex.candidate(0.1).unwrap();
        let m0 = cand.constants.iter().find(|c| c.0 == "M0").unwrap().1;
        assert!(m0 <= 0.5 * (0.1 / ex.lambda1).powi(2) * (1.0 + 1e-12));
        assert_relative_eq!((0.1 / ex.lambda1).powi(2), 1.0266e-4, max_relative = 1e-3);
        let built = ex.build(4.0, &opts()).unwrap();
        assert!(built.g1.pass && built.g2.pass);
        assert!(matches!(
            Example2::new(&green, 1.0, 1.0, 1.5, 2.0, 0.5),
            Err(Error::InvalidExponent(_))
        ));
        assert!(ex.build(9.0, &opts()).is_err());
    }

    #[test]
    fn example3_constants() {
        let green = green(256);
        let ex = Example3::new(&green, Forcing::constant(2.0), 1.0).unwrap();
        assert_relative_eq!(ex.m0, 3.1, max_relative = 1e-14);
        let built = ex.build(&opts()).unwrap();
        assert_relative_eq!(built.interval.psi.max(), 0.3875, max_relative = 1e-12);
        let ex = Example3::new(&green, Forcing::poly_signchanging(), 1.0).unwrap();
        assert!((ex.m0 - 3.1).abs() < 0.05);
        ex.build(&opts()).unwrap();
        assert!(matches!(
            Example3::new(&green, Forcing::constant(0.0), 1.0),
            Err(Error::InfeasibleForcing(_))
        ));
    }

    #[test]
    fn example4_constants_and_range() {
        let green = green(256);
        let ex = Example4::new(&green, 1.0, 0.5, 0.9).unwrap();
        let cubic = (512.0 / PI).sqrt();
        assert_relative_eq!(cubic, 12.766, epsilon = 1e-3);
        assert_relative_eq!(ex.m1, 0.9 * 4.0 * PI, max_relative = 1e-12);
        assert_relative_eq!(ex.m1, 11.310, epsilon = 1e-3);
        let expected_mu0 = (ex.m1 - PI * ex.m1.powi(3) / 512.0) / (ex.m1.sqrt() * 8f64.powf(-0.5));
        assert_relative_eq!(ex.mu0, expected_mu0, max_relative = 1e-12);
        assert!(ex.mu0 > 0.0);
        let built = ex.build(ex.mu0 / 2.0, &opts()).unwrap();
        assert!(built.interval.psi.max() <= PI / 2.0 + 1e-12);
        assert_relative_eq!(built.interval.psi.max(), 1.4137, epsilon = 1e-4);
    }

    #[test]
    fn example4_fails_g2_when_psi_exceeds_monotone_range() {
        let green = green(128);
        let ex = Example4::new(&green, 1.0, 0.5, 0.9).unwrap();
        let cand = ex.candidate(ex.mu0 / 2.0).unwrap();
        let stretch = 2.0 * PI / cand.interval.psi.max();
        let wide = OrderInterval::new(
            cand.interval.phi.clone(),
            cand.interval.psi.scaled(stretch),
            cand.interval.alpha,
        )
        .unwrap();
        let r = check_g2(cand.spec.grid(), cand.spec.nonlinearity(), &wide, &opts()).unwrap();
        assert!(!r.pass);
        assert!(r.lower_margin < 0.0);
    }

    #[test]
    fn thresholds_grow_with_safety_factor() {
        // λ_f = σ^p·C is monotone on all of (0, 1). μ₀(σ) for the concave
        // examples rises up to an interior maximizer: σ* = 1/3 for Example 2
        // (q = 1/2, p = 2) and σ* = √(0.5·512/(2.5π))/(4π) ≈ 0.454 for Example 4.
        let green = green(64);
        let l = |s| Example1::new(&green, Forcing::constant(2.0), 2.0, 1.0, s).unwrap().lambda_f;
        let m2 = |s| Example2::new(&green, 1.0, 1.0, 0.5, 2.0, s).unwrap().mu0;
        let m4 = |s| Example4::new(&green, 1.0, 0.5, s).unwrap().mu0;
        for (a, b) in [(0.1, 0.2), (0.2, 0.4), (0.4, 0.8), (0.45, 0.9)] {
            assert!(l(b) >= l(a));
        }
        for (a, b) in [(0.05, 0.1), (0.1, 0.2), (0.15, 0.3)] {
            assert!(m2(b) >= m2(a));
        }
        for (a, b) in [(0.05, 0.1), (0.1, 0.2), (0.2, 0.4)] {
            assert!(m4(b) >= m4(a));
        }
        assert!(m2(0.5) < m2(1.0 / 3.0));
        assert!(m4(0.9) < m4(0.45));
    }

    #[test]
    fn g2_is_deterministic_in_seed() {
        let green = green(64);
        let ex = Example2::new(&green, 1.0, 1.0, 0.5, 2.0, 0.5).unwrap();
        let cand = ex.candidate(4.0).unwrap();
        let a = check_g2(cand.spec.grid(), cand.spec.nonlinearity(), &cand.interval, &G2Options::with_seed(3)).unwrap();
        let b = check_g2(cand.spec.grid(), cand.spec.nonlinearity(), &cand.interval, &G2Options::with_seed(3)).unwrap();
        assert_eq!(a.lower_margin, b.lower_margin);
        assert_eq!(a.samples, 11 * 202);
    }

    #[test]
    fn tabulated_forcing_interpolates() {
        let f = Forcing::parse_table("t", "x,f\n# comment\n0, 1\n0.5 3\n\n1.0,\t-1\n").unwrap();
        assert_eq!(f.eval(&[0.25]), 2.0);
        assert_eq!(f.eval(&[0.75]), 1.0);
        assert_eq!(f.eval(&[-1.0]), 1.0);
        assert_eq!(f.eval(&[2.0]), -1.0);
        assert_eq!(f.eval(&[0.5]), 3.0);
        assert!(Forcing::parse_table("t", "0 1\nx f\n1 2").is_err());
        assert!(Forcing::parse_table("t", "0 1\n0 2").is_err());
        assert!(Forcing::parse_table("t", "0 1").is_err());
        assert!(Forcing::parse_table("t", "0 1 2\n1 2 3").is_err());
    }

    #[test]
    fn forcing_presets() {
        assert_eq!(Forcing::preset("constant:2.5").unwrap().eval(&[0.3]), 2.5);
        assert_eq!(Forcing::preset("poly-signchanging").unwrap().eval(&[0.5]), 1.0);
        assert!(Forcing::preset("constant:abc").is_err());
        assert!(Forcing::preset("constant:inf").is_err());
        assert!(Forcing::preset("cubic").is_err());
    }

    #[test]
    fn example_params_defaults_build() {
        let gr = green(64);
        for kind in ExampleKind::ALL {
            assert_eq!(kind.as_str().parse::<ExampleKind>().unwrap(), kind);
            let params = ExampleParams::defaults(kind);
            let built = params.build(&gr, &opts()).unwrap();
            assert_eq!(built.name, kind.as_str());
            match params.threshold(&gr).unwrap() {
                Some(t) => assert_relative_eq!(built.parameter.unwrap(), 0.5 * t.value),
                None => assert_eq!(kind, ExampleKind::Example3),
            }
        }
        assert!(matches!("example5".parse::<ExampleKind>(), Err(Error::UnknownProblem(_))));
    }

    #[test]
    fn example_params_range_guard() {
        let gr = green(64);
        let mut params = ExampleParams::defaults(ExampleKind::Example2);
        params.parameter = Parameter::Value(1e9);
        assert!(matches!(params.candidate(&gr), Err(Error::ParameterOutOfRange { name: "mu", .. })));
        assert!(params.candidate_unchecked(&gr).is_ok());
        params.parameter = Parameter::Fraction(1.0);
        assert!(params.candidate(&gr).is_err());
    }
}
