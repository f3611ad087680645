//! Batch front end for the `qvar` tool: problem files, command handlers and
//! trajectory reports. The binary in `main.rs` only parses flags and maps
//! [`CliError`] to exit codes.

pub mod problem;
pub mod report;

use qvar_core::identities::{run_identity_suite, SuiteReport};
use qvar_core::solver::{default_prefix, diagnose, optimize_truncated, shoot_forward, ProblemSpec};
use qvar_core::{Error, LatticeFn};

pub use problem::{emit_problem, load_problem, ProblemFile};
pub use report::{emit_trajectory_csv, read_trajectory_csv};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// 0 success, 1 bad input, 2 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parse { .. } => CliError::Parse(msg),
            Error::Overflow(_)
            | Error::NonFinite(_)
            | Error::EvalDomain(_)
            | Error::DegenerateLagrangian { .. }
            | Error::NoBracket { .. }
            | Error::RootNotConverged { .. }
            | Error::LineSearchStall { .. } => CliError::Numeric(msg),
            _ => CliError::Validation(msg),
        }
    }
}

/// Output of a command: the CSV document plus a human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub csv: String,
    pub summary: String,
}

pub fn verify(trials: usize, seed: u64) -> Result<(SuiteReport, String), CliError> {
    let report = run_identity_suite(trials, seed)?;
    let mut text = format!("identity suite: {trials} trials, seed {seed}\n");
    for t in &report.tallies {
        text.push_str(&format!(
            "{:<36} passed {:>6}  failed {:>6}  worst {:.3e}\n",
            t.name, t.passed, t.failed, t.worst
        ));
    }
    text.push_str(if report.all_passed() {
        "result: PASS\n"
    } else {
        "result: FAIL\n"
    });
    Ok((report, text))
}

fn summarize(spec: &ProblemSpec, x: &LatticeFn) -> Result<(String, String), CliError> {
    let diag = diagnose(&spec.lagrangian, x, spec)?;
    let mut summary = format!(
        "points {}  el_max_abs {:.3e}  el_satisfied {}\n",
        x.len(),
        diag.el_max_abs,
        diag.el_satisfied
    );
    if let Some(j) = diag.j_value {
        summary.push_str(&format!("J(k_hi = {}) = {:.16e}\n", spec.horizon.k_hi, j));
    }
    for rec in &diag.transversality {
        summary.push_str(&format!(
            "transversality k={}: liminf estimate {:?}, verdict {:?}\n",
            rec.sequence.k,
            rec.sequence.liminf_estimate(),
            rec.verdict
        ));
    }
    Ok((emit_trajectory_csv(x, &diag), summary))
}

/// Forward shooting from `prefix`, or from the default admissible prefix.
pub fn solve(problem: &str, prefix: Option<&[f64]>) -> Result<CommandOutput, CliError> {
    let spec = load_problem(problem)?;
    let prefix = match prefix {
        Some(p) => p.to_vec(),
        None => default_prefix(&spec)?,
    };
    let x = shoot_forward(&spec.lagrangian, &prefix, &spec)?;
    let (csv, summary) = summarize(&spec, &x)?;
    Ok(CommandOutput { csv, summary })
}

/// Direct maximisation of the truncated functional.
pub fn optimize(problem: &str) -> Result<CommandOutput, CliError> {
    let spec = load_problem(problem)?;
    let res = optimize_truncated(&spec.lagrangian, &spec.alphas, &spec)?;
    if !res.converged {
        return Err(CliError::Numeric(format!(
            "optimizer stopped after {} iterations with max |gradient| {:.3e}",
            res.iterations, res.grad_max
        )));
    }
    let (csv, mut summary) = summarize(&spec, &res.x)?;
    summary.insert_str(
        0,
        &format!(
            "optimizer: {} iterations, max |gradient| {:.3e}\n",
            res.iterations, res.grad_max
        ),
    );
    Ok(CommandOutput { csv, summary })
}

/// Diagnostics of a trajectory read from a CSV produced by this tool.
pub fn diagnose_trajectory(problem: &str, trajectory: &str) -> Result<CommandOutput, CliError> {
    let spec = load_problem(problem)?;
    let x = read_trajectory_csv(trajectory, spec.lattice)?;
    let (csv, summary) = summarize(&spec, &x)?;
    Ok(CommandOutput { csv, summary })
}

/// Parses `v1,v2,...` into reals.
pub fn parse_prefix(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Parse(format!("bad prefix value {s:?}")))
        })
        .collect()
}
