use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use kirchhoff_core::elliptic::GreenOperator;
use kirchhoff_core::expr::Definition;
use kirchhoff_core::grid::{DomainSpec, Grid};
use kirchhoff_core::nonlocal::{SolveOptions, StartPoint};
use kirchhoff_core::problems::{ExampleKind, ExampleParams, Forcing, G2Options, Parameter, ProblemCandidate};

use crate::CliError;

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// example1, example2, example3, example4 or custom
    #[arg(long, default_value = "example1")]
    pub problem: String,
    /// Problem definition file (with --problem custom)
    #[arg(long)]
    pub def: Option<PathBuf>,
    /// Forcing: constant:<v>, poly-signchanging, or a two-column table file
    #[arg(long = "f", default_value = "poly-signchanging")]
    pub forcing: String,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub d: Option<f64>,
    /// Safety factor in (0, 1)
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, group = "param")]
    pub lambda: Option<f64>,
    /// lambda as a fraction of lambda_f
    #[arg(long, group = "param")]
    pub lambda_frac: Option<f64>,
    #[arg(long, group = "param")]
    pub mu: Option<f64>,
    /// mu as a fraction of mu_0
    #[arg(long, group = "param")]
    pub mu_frac: Option<f64>,
    /// Mann relaxation in (0, 1]
    #[arg(long, default_value_t = 1.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// phi-end, psi-end or midpoint
    #[arg(long, default_value = "psi-end")]
    pub start: StartPoint,
    /// Cells per axis
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    /// 1 for (0,1), 2 for the unit square; ignored when --domain is given
    #[arg(long, default_value_t = 1)]
    pub dim: usize,
    /// Bounds as a,b or a,b,c,d
    #[arg(long)]
    pub domain: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub enum ProblemChoice {
    Example(ExampleParams),
    Custom(Arc<Definition>),
}

/// Validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemChoice,
    pub domain: DomainSpec,
    pub solve: SolveOptions,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_domain(args: &RunArgs) -> Result<DomainSpec, CliError> {
    let bounds = match &args.domain {
        Some(text) => {
            let v: Vec<f64> = text
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| config(format!("--domain `{text}`: expected numbers a,b or a,b,c,d")))?;
            match v.as_slice() {
                [a, b] => vec![(*a, *b)],
                [a, b, c, d] => vec![(*a, *b), (*c, *d)],
                _ => return Err(config(format!("--domain `{text}`: expected 2 or 4 numbers"))),
            }
        }
        None => match args.dim {
            1 => vec![(0.0, 1.0)],
            2 => vec![(0.0, 1.0), (0.0, 1.0)],
            d => return Err(config(format!("--dim {d}: only 1 and 2 are supported"))),
        },
    };
    let cells = vec![args.n; bounds.len()];
    DomainSpec::new(bounds, cells).map_err(|e| config(e.to_string()))
}

fn parse_forcing(spec: &str) -> Result<Forcing, CliError> {
    if spec == "poly-signchanging" || spec.starts_with("constant:") {
        return Forcing::preset(spec).map_err(|e| config(e.to_string()));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(config(format!(
            "--f `{spec}`: not a preset (constant:<v>, poly-signchanging) and no such file"
        )));
    }
    Forcing::parse_table(spec, &read(path)?).map_err(|e| config(format!("{spec}: {e}")))
}

fn parameter(args: &RunArgs, kind: ExampleKind) -> Result<Option<Parameter>, CliError> {
    let (abs, frac, other, name) = match kind {
        ExampleKind::Example1 => (args.lambda, args.lambda_frac, args.mu.or(args.mu_frac), "lambda"),
        ExampleKind::Example2 | ExampleKind::Example4 => {
            (args.mu, args.mu_frac, args.lambda.or(args.lambda_frac), "mu")
        }
        ExampleKind::Example3 => {
            if args.lambda.or(args.lambda_frac).or(args.mu).or(args.mu_frac).is_some() {
                return Err(config("example3 has no lambda or mu parameter"));
            }
            return Ok(None);
        }
    };
    if other.is_some() {
        return Err(config(format!("{} takes --{name} or --{name}-frac", kind.as_str())));
    }
    Ok(abs.map(Parameter::Value).or(frac.map(Parameter::Fraction)))
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let domain = parse_domain(args)?;
        let problem = if args.problem == "custom" {
            let path = args
                .def
                .as_ref()
                .ok_or_else(|| config("--problem custom needs --def <file>"))?;
            let def = Definition::parse(&read(path)?).map_err(|e| config(format!("{}: {e}", path.display())))?;
            ProblemChoice::Custom(Arc::new(def))
        } else {
            if args.def.is_some() {
                return Err(config("--def only applies to --problem custom"));
            }
            let kind: ExampleKind = args.problem.parse().map_err(|e: kirchhoff_core::error::Error| config(e.to_string()))?;
            let mut params = ExampleParams::defaults(kind);
            if matches!(kind, ExampleKind::Example1 | ExampleKind::Example3) {
                params.forcing = parse_forcing(&args.forcing)?;
            }
            for (slot, value) in [
                (&mut params.p, args.p),
                (&mut params.q, args.q),
                (&mut params.c, args.c),
                (&mut params.d, args.d),
                (&mut params.sigma, args.sigma),
            ] {
                if let Some(v) = value {
                    *slot = v;
                }
            }
            if let Some(p) = parameter(args, kind)? {
                params.parameter = p;
            }
            ProblemChoice::Example(params)
        };
        if !(args.theta > 0.0 && args.theta <= 1.0) {
            return Err(config(format!("--theta {} must lie in (0, 1]", args.theta)));
        }
        if !(args.tol > 0.0) || args.max_iter == 0 {
            return Err(config("--tol must be positive and --max-iter at least 1"));
        }
        Ok(Self {
            problem,
            domain,
            solve: SolveOptions {
                theta: args.theta,
                tol: args.tol,
                max_iter: args.max_iter,
                start: args.start,
                ..SolveOptions::default()
            },
            seed: args.seed,
            out_dir: args.out_dir.clone(),
        })
    }

    pub fn name(&self) -> &'static str {
        match &self.problem {
            ProblemChoice::Example(p) => p.kind.as_str(),
            ProblemChoice::Custom(_) => "custom",
        }
    }

    pub fn grid(&self) -> Arc<Grid> {
        Grid::new(self.domain.clone())
    }

    pub fn green(&self) -> Result<GreenOperator, CliError> {
        Ok(GreenOperator::new(&self.grid())?)
    }

    pub fn g2_options(&self) -> G2Options {
        G2Options::with_seed(self.seed)
    }

    /// Builds the candidate; `checked` enforces `0 < parameter < threshold`.
    pub fn candidate(&self, green: &GreenOperator, checked: bool) -> Result<ProblemCandidate, CliError> {
        Ok(match &self.problem {
            ProblemChoice::Example(p) if checked => p.candidate(green)?,
            ProblemChoice::Example(p) => p.candidate_unchecked(green)?,
            ProblemChoice::Custom(def) => def.candidate(green)?,
        })
    }
}
