//! Problem definitions read from plain text.
//!
//! One `key = expression` per line, `#` starts a comment:
//!
//! ```text
//! # Kirchhoff coefficient with a constant source
//! A   = 1 + 0.5 * t^2
//! m   = 1
//! g   = 1 + 0.1 * sin(u)
//! phi = 0
//! psi = 2 * xi
//! ```
//!
//! | key     | required | variables          | default |
//! |---------|----------|--------------------|---------|
//! | `A`     | yes      | `s`, `t`           |         |
//! | `g`     | yes      | `x`, `y`, `u`      |         |
//! | `psi`   | yes      | `x`, `y`, `xi`, `phi1` |     |
//! | `phi`   | no       | `x`, `y`, `xi`, `phi1` | `0` |
//! | `m`     | no       | none               | `1`     |
//! | `p`     | no       | none               | `2`     |
//! | `alpha` | no       | none               | `0`     |
//!
//! `xi` is the torsion function and `phi1` the principal eigenfunction
//! (max 1). Functions: `sin`, `cos`, `exp`, `log` (natural), `pow(a, b)`,
//! `abs`; constants `pi` and `e`; `^` is exponentiation.

use std::collections::BTreeMap;

use meval::tokenizer::Token;
use meval::{ContextProvider, FuncEvalError};

use crate::elliptic::GreenOperator;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::nonlocal::{CoefficientA, NonlinearityG, OrderInterval, ProblemSpec};
use crate::problems::ProblemCandidate;

const VARIABLES: [&str; 7] = ["s", "t", "x", "y", "u", "xi", "phi1"];
const FUNCTIONS: [(&str, usize); 6] = [
    ("sin", 1),
    ("cos", 1),
    ("exp", 1),
    ("log", 1),
    ("pow", 2),
    ("abs", 1),
];

/// Values for the free variables of an expression; unset entries are NaN.
#[derive(Debug, Clone, Copy)]
pub struct Scope([f64; 7]);

impl Default for Scope {
    fn default() -> Self {
        Scope([f64::NAN; 7])
    }
}

impl Scope {
    pub fn set(mut self, name: &str, value: f64) -> Self {
        if let Some(i) = VARIABLES.iter().position(|v| *v == name) {
            self.0[i] = value;
        }
        self
    }
}

impl ContextProvider for Scope {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => VARIABLES.iter().position(|v| *v == name).map(|i| self.0[i]),
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, FuncEvalError> {
        Ok(match (name, args) {
            ("sin", [a]) => a.sin(),
            ("cos", [a]) => a.cos(),
            ("exp", [a]) => a.exp(),
            ("log", [a]) => a.ln(),
            ("abs", [a]) => a.abs(),
            ("pow", [a, b]) => a.powf(*b),
            (_, _) if FUNCTIONS.iter().any(|(f, _)| *f == name) => {
                return Err(FuncEvalError::NumberArgs(args.len()))
            }
            _ => return Err(FuncEvalError::UnknownFunction),
        })
    }
}

/// A parsed expression whose variables are restricted to a fixed set.
#[derive(Debug, Clone)]
pub struct Expression {
    source: String,
    expr: meval::Expr,
    variables: Vec<String>,
}

impl Expression {
    /// Parses `source`, rejecting variables outside `allowed` and unknown
    /// functions or wrong arities.
    pub fn parse(source: &str, allowed: &[&str]) -> Result<Self> {
        let expr: meval::Expr = source
            .trim()
            .parse()
            .map_err(|e| Error::Expression(format!("cannot parse `{}`: {e}", source.trim())))?;
        let mut variables = Vec::new();
        for token in expr.iter() {
            match token {
                Token::Var(name) if name == "pi" || name == "e" => {}
                Token::Var(name) => {
                    if !allowed.contains(&name.as_str()) {
                        return Err(Error::Expression(format!(
                            "unknown variable `{name}` (allowed: {})",
                            if allowed.is_empty() { "none".into() } else { allowed.join(", ") }
                        )));
                    }
                    if !variables.contains(name) {
                        variables.push(name.clone());
                    }
                }
                Token::Func(name, arity) => match FUNCTIONS.iter().find(|(f, _)| f == name) {
                    None => return Err(Error::Expression(format!("unknown function `{name}`"))),
                    Some((_, n)) if Some(*n) != *arity => {
                        return Err(Error::Expression(format!("`{name}` takes {n} argument(s)")))
                    }
                    Some(_) => {}
                },
                _ => {}
            }
        }
        Ok(Self {
            source: source.trim().to_string(),
            expr,
            variables,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses(&self, name: &str) -> bool {
        self.variables.iter().any(|v| v == name)
    }

    /// Evaluates; the result is NaN if the expression itself fails.
    pub fn eval(&self, scope: Scope) -> f64 {
        self.expr.eval_with_context(scope).unwrap_or(f64::NAN)
    }

    fn constant(&self) -> Result<f64> {
        let v = self.eval(Scope::default());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Expression(format!("`{}` is not a finite number", self.source)))
        }
    }
}

/// A user-supplied problem: coefficient, nonlinearity and candidate interval.
#[derive(Debug, Clone)]
pub struct Definition {
    pub a: Expression,
    pub g: Expression,
    pub phi: Expression,
    pub psi: Expression,
    pub m: f64,
    pub p: f64,
    pub alpha: f64,
}

fn allowed(key: &str) -> Option<&'static [&'static str]> {
    Some(match key {
        "A" => &["s", "t"],
        "g" => &["x", "y", "u"],
        "phi" | "psi" => &["x", "y", "xi", "phi1"],
        "m" | "p" | "alpha" => &[],
        _ => return None,
    })
}

impl Definition {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<&str, (usize, Expression)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Expression(format!("line {line_no}: {msg}"));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at("expected `key = expression`".into()))?;
            let key = key.trim();
            let vars = allowed(key).ok_or_else(|| at(format!("unknown key `{key}`")))?;
            let expr = Expression::parse(value, vars).map_err(|e| match e {
                Error::Expression(msg) => at(msg),
                other => other,
            })?;
            if entries.insert(key, (line_no, expr)).is_some() {
                return Err(at(format!("duplicate key `{key}`")));
            }
        }
        let mut take = |key: &str| entries.remove(key);
        let require = |e: Option<(usize, Expression)>, key: &str| {
            e.map(|(_, x)| x)
                .ok_or_else(|| Error::Expression(format!("missing required key `{key}`")))
        };
        let number = |e: Option<(usize, Expression)>, default: f64| -> Result<f64> {
            match e {
                None => Ok(default),
                Some((line, x)) => x.constant().map_err(|err| match err {
                    Error::Expression(msg) => Error::Expression(format!("line {line}: {msg}")),
                    other => other,
                }),
            }
        };
        let a = require(take("A"), "A")?;
        let g = require(take("g"), "g")?;
        let psi = require(take("psi"), "psi")?;
        let phi = match take("phi") {
            Some((_, x)) => x,
            None => Expression::parse("0", &[])?,
        };
        Ok(Self {
            a,
            g,
            phi,
            psi,
            m: number(take("m"), 1.0)?,
            p: number(take("p"), 2.0)?,
            alpha: number(take("alpha"), 0.0)?,
        })
    }

    /// Samples the definition on the operator's grid. The interval is not
    /// checked for ordering here; that is left to the structural checks.
    pub fn candidate(&self, green: &GreenOperator) -> Result<ProblemCandidate> {
        let grid = green.grid();
        let dim = grid.dimension();
        if dim < 2 {
            for (key, e) in [("g", &self.g), ("phi", &self.phi), ("psi", &self.psi)] {
                if e.uses("y") {
                    return Err(Error::Expression(format!(
                        "`{key}` uses y but the domain is one-dimensional"
                    )));
                }
            }
        }
        let a = self.a.clone();
        let coefficient = CoefficientA::new(self.m, move |s, t| {
            a.eval(Scope::default().set("s", s).set("t", t))
        })?;
        let g = self.g.clone();
        let nonlinearity = NonlinearityG::new(move |x, u| {
            let mut scope = Scope::default().set("x", x[0]).set("u", u);
            if x.len() > 1 {
                scope = scope.set("y", x[1]);
            }
            g.eval(scope)
        });
        let spec = ProblemSpec::new(grid, coefficient, nonlinearity, self.p)?;

        let needs = |name| self.phi.uses(name) || self.psi.uses(name);
        let xi = if needs("xi") {
            Some(green.torsion_function()?)
        } else {
            None
        };
        let phi1 = if needs("phi1") {
            Some(green.principal_eigenpair(1e-12)?.phi1)
        } else {
            None
        };
        let sample = |e: &Expression| -> Result<Field> {
            let values = grid
                .points()
                .enumerate()
                .map(|(i, x)| {
                    let mut scope = Scope::default().set("x", x[0]);
                    if x.len() > 1 {
                        scope = scope.set("y", x[1]);
                    }
                    if let Some(xi) = &xi {
                        scope = scope.set("xi", xi.values()[i]);
                    }
                    if let Some(p1) = &phi1 {
                        scope = scope.set("phi1", p1.values()[i]);
                    }
                    e.eval(scope)
                })
                .collect();
            Field::new(grid, values)
        };
        let interval = OrderInterval::new_unchecked(sample(&self.phi)?, sample(&self.psi)?, self.alpha)?;
        Ok(ProblemCandidate {
            name: "custom",
            spec,
            interval,
            threshold: None,
            parameter: None,
            constants: vec![("m", self.m), ("p", self.p), ("alpha", self.alpha)],
            lower_bound_factor: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::nonlocal::{fixed_point_solve, SolveOptions, SolveStatus};
    use crate::problems::G2Options;

    fn expect_err(text: &str, needle: &str) {
        match Definition::parse(text) {
            Err(Error::Expression(msg)) => assert!(msg.contains(needle), "{msg:?} lacks {needle:?}"),
            other => panic!("expected expression error, got {other:?}"),
        }
    }

    #[test]
    fn evaluates_functions_and_constants() {
        let e = Expression::parse("pow(u, 2) + abs(-x) + log(e) + sin(pi/2) + cos(0) + exp(0)", &["u", "x"])
            .unwrap();
        let v = e.eval(Scope::default().set("u", 3.0).set("x", 0.25));
        assert!((v - (9.0 + 0.25 + 4.0)).abs() < 1e-14);
        let e = Expression::parse("2^3^0 * -s", &["s"]).unwrap();
        assert_eq!(e.eval(Scope::default().set("s", 1.5)), -3.0);
    }

    #[test]
    fn parses_with_defaults_and_comments() {
        let d = Definition::parse("# header\nA = 1 + s^2 # Carrier\n\ng = 1\npsi = xi\n").unwrap();
        assert_eq!((d.m, d.p, d.alpha), (1.0, 2.0, 0.0));
        assert_eq!(d.phi.source(), "0");
        assert_eq!(d.a.source(), "1 + s^2");
        let d = Definition::parse("A=2\ng=u\npsi=1\nm = 2\np = 3\nalpha = 1/2").unwrap();
        assert_eq!((d.m, d.p, d.alpha), (2.0, 3.0, 0.5));
    }

    #[test]
    fn reports_line_numbers() {
        expect_err("A = 1\n\ng = q\npsi = xi", "line 3: unknown variable `q`");
        expect_err("A = 1\ng = 1\nA = 2", "line 3: duplicate key `A`");
        expect_err("A = 1\nB = 1", "line 2: unknown key `B`");
        expect_err("A = 1\ng 1", "line 2: expected");
        expect_err("A = 1 +\ng = 1\npsi = xi", "line 1: cannot parse");
        expect_err("A = tan(s)", "line 1: unknown function `tan`");
        expect_err("A = pow(s)", "line 1: `pow` takes 2");
        expect_err("A = u", "line 1: unknown variable `u`");
        expect_err("A = 1\ng = 1\npsi = xi\nm = s", "line 4: unknown variable `s`");
        expect_err("A = 1\ng = 1\npsi = xi\np = log(0)", "line 4: `log(0)` is not a finite");
        expect_err("A = 1\ng = 1", "missing required key `psi`");
    }

    #[test]
    fn unit_problem_solves_to_torsion() {
        let grid = Grid::build(vec![(0.0, 1.0)], vec![64]).unwrap();
        let green = GreenOperator::new(&grid).unwrap();
        let d = Definition::parse("A = 1\ng = 1\npsi = xi").unwrap();
        let built = d.candidate(&green).unwrap().certify(&G2Options::default()).unwrap();
        let report = fixed_point_solve(&built.spec, &green, &built.interval, &SolveOptions::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let xi = green.torsion_function().unwrap();
        assert!(report.u.sup_distance(&xi).unwrap() < 1e-14);
    }

    #[test]
    fn samples_eigenfunction_and_coordinates() {
        let grid = Grid::build(vec![(0.0, 1.0), (0.0, 1.0)], vec![8, 8]).unwrap();
        let green = GreenOperator::new(&grid).unwrap();
        let d = Definition::parse("A = 1 + t\ng = 1 + x*y\nphi = 0.01*phi1\npsi = 4*xi + 0*y").unwrap();
        let c = d.candidate(&green).unwrap();
        assert!((c.interval.phi.max() - 0.01).abs() < 1e-12);
        assert!((c.spec.nonlinearity().eval(&[0.5, 0.5], 0.0) - 1.25).abs() < 1e-15);

        let line = Grid::build(vec![(0.0, 1.0)], vec![8]).unwrap();
        let err = d.candidate(&GreenOperator::new(&line).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Expression(m) if m.contains("one-dimensional")));
    }

    #[test]
    fn misordered_interval_fails_certification() {
        let grid = Grid::build(vec![(0.0, 1.0)], vec![16]).unwrap();
        let green = GreenOperator::new(&grid).unwrap();
        let d = Definition::parse("A = 1\ng = 1\nphi = xi\npsi = xi * (1 - 2*x)").unwrap();
        let c = d.candidate(&green).unwrap();
        let (g1, _) = c.check(&G2Options::default()).unwrap();
        assert!(!g1.pass);
        assert!(g1.order_margin < 0.0);
    }
}
