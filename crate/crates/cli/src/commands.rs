use std::fs;
use std::io::Write;
use std::path::Path;

use kirchhoff_core::elliptic::GreenOperator;
use kirchhoff_core::grid::{format_float, write_csv, Field};
use kirchhoff_core::nonlocal::{fixed_point_solve, verify_invariance, SolveReport, SolveStatus};
use kirchhoff_core::oracle::{green_positivity_check, newton_solve, NewtonOptions, MAX_DENSE_AXIS};
use kirchhoff_core::problems::{BuiltProblem, G1Report, G2Report, Parameter, ProblemCandidate, Threshold};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ProblemChoice, RunConfig};
use crate::{exit, CliError};

/// Sup-norm agreement required between the two solvers.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut file = fs::File::create(path).map_err(io)?;
    file.write_all(bytes).map_err(io)
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn status_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => exit::OK,
        SolveStatus::MaxIter => exit::MAX_ITER,
        SolveStatus::LeftInterval => exit::LEFT_INTERVAL,
    }
}

/// `solution.csv` and `report.json` for one solve.
fn write_solution(dir: &Path, problem: &ProblemCandidate, report: &SolveReport) -> Result<(), CliError> {
    let rm_phi = problem.interval.phi.scaled(report.r_m);
    let mut csv = Vec::new();
    write_csv(
        &mut csv,
        &[
            ("u", &report.u),
            ("phi", &problem.interval.phi),
            ("psi", &problem.interval.psi),
            ("rm_phi", &rm_phi),
        ],
    )
    .expect("in-memory write");
    write_file(&dir.join("solution.csv"), &csv)?;
    let mut json = report.to_json().into_bytes();
    json.push(b'\n');
    write_file(&dir.join("report.json"), &json)
}

fn certify(cfg: &RunConfig, green: &GreenOperator) -> Result<BuiltProblem, CliError> {
    Ok(cfg.candidate(green, true)?.certify(&cfg.g2_options())?)
}

pub fn solve(cfg: &RunConfig) -> Result<u8, CliError> {
    let green = cfg.green()?;
    let problem = certify(cfg, &green)?;
    let report = fixed_point_solve(&problem.spec, &green, &problem.interval, &cfg.solve)?;
    write_solution(&cfg.out_dir, &problem, &report)?;
    println!(
        "{}: {} after {} iterations, residual {:.3e}, M {:.6}, r_M {:.6}",
        cfg.name(),
        report.status.as_str(),
        report.iterations,
        report.residual,
        report.m_const,
        report.r_m
    );
    Ok(status_code(report.status))
}

#[derive(Serialize)]
struct Verification<'a> {
    problem: &'a str,
    pass: bool,
    parameter: Option<f64>,
    threshold: Option<Threshold>,
    g1: G1Report,
    g2: G2Report,
    invariance: kirchhoff_core::nonlocal::InvarianceReport,
    green_positivity: kirchhoff_core::oracle::GreenPositivityReport,
}

/// Fields drawn by the invariance check.
pub const INVARIANCE_TRIALS: usize = 1000;

pub fn verify(cfg: &RunConfig) -> Result<u8, CliError> {
    let green = cfg.green()?;
    let problem = cfg.candidate(&green, false)?;
    let (g1, g2) = problem.check(&cfg.g2_options())?;
    let invariance = verify_invariance(&problem.spec, &green, &problem.interval, INVARIANCE_TRIALS, cfg.seed)?;
    let positivity = green_positivity_check(&green, cfg.seed)?;
    let pass = g1.pass && g2.pass && invariance.pass && positivity.pass;
    let doc = Verification {
        problem: cfg.name(),
        pass,
        parameter: problem.parameter,
        threshold: problem.threshold,
        g1,
        g2,
        invariance,
        green_positivity: positivity,
    };
    write_file(&cfg.out_dir.join("verification.json"), &to_json(&doc))?;
    println!(
        "{}: G1 {} (worst {:.3e}), G2 {} (worst {:.3e}), invariance {} ({} of {} violate), Green positivity {}",
        cfg.name(),
        verdict(doc.g1.pass),
        doc.g1.worst_margin,
        verdict(doc.g2.pass),
        doc.g2.worst_margin,
        verdict(doc.invariance.pass),
        doc.invariance.violations,
        doc.invariance.samples,
        verdict(doc.green_positivity.pass),
    );
    Ok(if pass { exit::OK } else { exit::CONDITIONS_FAILED })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

/// `points` fractions of the threshold: the midpoint for one point,
/// otherwise equispaced over `[0.05, 0.95]`.
pub fn ladder(points: usize) -> Vec<f64> {
    match points {
        1 => vec![0.5],
        n => (0..n).map(|k| 0.05 + 0.9 * k as f64 / (n - 1) as f64).collect(),
    }
}

struct SweepRow {
    parameter: f64,
    status: &'static str,
    code: u8,
    iterations: usize,
    residual: f64,
    min_ratio: f64,
}

/// `min u/φ` over nodes with `φ > 0`.
fn min_ratio(u: &Field, phi: &Field) -> f64 {
    u.values()
        .iter()
        .zip(phi.values())
        .filter(|(_, p)| **p > 0.0)
        .map(|(v, p)| v / p)
        .fold(f64::NAN, f64::min)
}

pub fn sweep(cfg: &RunConfig, points: usize, jobs: usize) -> Result<u8, CliError> {
    let ProblemChoice::Example(base) = &cfg.problem else {
        return Err(CliError::Config("sweep needs an example with a threshold".into()));
    };
    if points == 0 || jobs == 0 {
        return Err(CliError::Config("--points and --jobs must be at least 1".into()));
    }
    let green = cfg.green()?;
    let threshold = base
        .threshold(&green)?
        .ok_or_else(|| CliError::Config(format!("{} has no parameter to sweep", cfg.name())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let fractions = ladder(points);
    let rows: Vec<Result<SweepRow, CliError>> = pool.install(|| {
        fractions
            .par_iter()
            .enumerate()
            .map(|(k, &frac)| {
                let params = kirchhoff_core::problems::ExampleParams {
                    parameter: Parameter::Fraction(frac),
                    ..base.clone()
                };
                let parameter = frac * threshold.value;
                let problem = match params.build(&green, &cfg.g2_options()) {
                    Ok(p) => p,
                    Err(kirchhoff_core::error::Error::ConditionsFailed(_)) => {
                        return Ok(SweepRow {
                            parameter,
                            status: "conditions-failed",
                            code: exit::CONDITIONS_FAILED,
                            iterations: 0,
                            residual: f64::NAN,
                            min_ratio: f64::NAN,
                        })
                    }
                    Err(e) => return Err(e.into()),
                };
                let report = fixed_point_solve(&problem.spec, &green, &problem.interval, &cfg.solve)?;
                write_solution(&cfg.out_dir.join(format!("point-{k:03}")), &problem, &report)?;
                Ok(SweepRow {
                    parameter: problem.parameter.unwrap_or(parameter),
                    status: report.status.as_str(),
                    code: status_code(report.status),
                    iterations: report.iterations,
                    residual: report.residual,
                    min_ratio: min_ratio(&report.u, &problem.interval.phi),
                })
            })
            .collect()
    });
    let rows: Vec<SweepRow> = rows.into_iter().collect::<Result<_, _>>()?;
    let mut csv = String::from("parameter,status,iterations,residual,min_ratio\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            format_float(r.parameter),
            r.status,
            r.iterations,
            format_float(r.residual),
            format_float(r.min_ratio)
        ));
    }
    write_file(&cfg.out_dir.join("sweep.csv"), csv.as_bytes())?;
    let converged = rows.iter().filter(|r| r.code == exit::OK).count();
    println!(
        "{}: {converged} of {} points converged over (0, {} = {:.6})",
        cfg.name(),
        rows.len(),
        threshold.name,
        threshold.value
    );
    // the most severe per-row outcome decides the exit code
    Ok(rows.iter().map(|r| r.code).max().unwrap_or(exit::OK))
}

#[derive(Serialize)]
struct FixedPointSummary {
    status: &'static str,
    iterations: usize,
    residual: f64,
}

#[derive(Serialize)]
struct NewtonSummary {
    converged: bool,
    start: &'static str,
    iterations: usize,
    final_residual: f64,
    error: Option<String>,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    problem: &'a str,
    verdict: &'static str,
    sup_diff: Option<f64>,
    tolerance: f64,
    fixed_point: FixedPointSummary,
    newton: NewtonSummary,
}

/// Verdict and exit code of an oracle comparison. `sup_diff` is `None`
/// when Newton did not converge.
pub fn classify(fixed_point: SolveStatus, sup_diff: Option<f64>) -> (&'static str, u8) {
    match (fixed_point, sup_diff) {
        (SolveStatus::Converged, Some(d)) if d <= ORACLE_TOLERANCE => ("agree", exit::OK),
        (SolveStatus::Converged, Some(_)) => ("disagree", exit::ORACLE_DISAGREE),
        (SolveStatus::Converged, None) => ("oracle-inconclusive", exit::ORACLE_INCONCLUSIVE),
        (status, _) => ("fixed-point-failed", status_code(status)),
    }
}

pub fn oracle_compare(cfg: &RunConfig) -> Result<u8, CliError> {
    let grid = cfg.grid();
    if grid.interior_counts().iter().any(|&n| n > MAX_DENSE_AXIS) {
        return Err(CliError::Config(format!(
            "oracle-compare needs at most {MAX_DENSE_AXIS} interior nodes per axis (--n <= {})",
            MAX_DENSE_AXIS + 1
        )));
    }
    let green = cfg.green()?;
    let problem = certify(cfg, &green)?;
    let fp = fixed_point_solve(&problem.spec, &green, &problem.interval, &cfg.solve)?;

    // midpoint of [φ, ψ] first, ψ as a fallback
    let interval = &problem.interval;
    let midpoint = interval.phi.zip_map(&interval.psi, |a, b| 0.5 * (a + b))?;
    let mut newton = NewtonSummary {
        converged: false,
        start: "midpoint",
        iterations: 0,
        final_residual: f64::NAN,
        error: None,
    };
    let mut oracle_u = None;
    for (label, start) in [("midpoint", &midpoint), ("psi", &interval.psi)] {
        newton.start = label;
        match newton_solve(&problem.spec, start, &NewtonOptions::default()) {
            Ok(r) => {
                newton.converged = r.converged;
                newton.iterations = r.newton_iterations;
                newton.final_residual = r.final_residual;
                newton.error = None;
                if r.converged {
                    oracle_u = Some(r.u);
                    break;
                }
            }
            Err(e) => newton.error = Some(e.to_string()),
        }
    }
    let sup_diff = oracle_u.as_ref().map(|u| u.sup_distance(&fp.u)).transpose()?;
    let (verdict, code) = classify(fp.status, sup_diff);
    let doc = OracleReport {
        problem: cfg.name(),
        verdict,
        sup_diff,
        tolerance: ORACLE_TOLERANCE,
        fixed_point: FixedPointSummary {
            status: fp.status.as_str(),
            iterations: fp.iterations,
            residual: fp.residual,
        },
        newton,
    };
    write_file(&cfg.out_dir.join("oracle.json"), &to_json(&doc))?;
    match sup_diff {
        Some(d) => println!("{}: {verdict}, sup-norm difference {d:.3e}", cfg.name()),
        None => println!("{}: {verdict}", cfg.name()),
    }
    Ok(code)
}
