use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qvar_cli::{diagnose_trajectory, optimize, parse_prefix, solve, verify, CliError};

/// q-calculus variational toolkit.
///
/// Lagrangians are written in `t` and `u1..u{r+1}`, where `u{i+1}` stands for
/// `D_q^i[x∘σ^{r-i}]`; so `u1` is `x∘σ^r` and `u{r+1}` is `D_q^r x`.
#[derive(Debug, Parser)]
#[command(name = "qvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the randomized q-calculus identity suites and print pass/fail counts.
    Verify {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Solve the Euler-Lagrange recurrence forward from a 2r-sample prefix.
    Solve {
        problem: PathBuf,
        /// Comma-separated x(t_0),...,x(t_{2r-1}); defaults to the prefix
        /// matching the initial conditions with vanishing r-th derivative.
        #[arg(long, allow_hyphen_values = true)]
        prefix: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximise the truncated functional directly.
    Optimize {
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute diagnostics for a trajectory CSV.
    Diagnose {
        problem: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let output = match cli.command {
        Command::Verify { trials, seed } => {
            let (report, text) = verify(trials, seed)?;
            print!("{text}");
            return Ok(report.all_passed());
        }
        Command::Solve {
            problem,
            prefix,
            out,
        } => {
            let prefix = prefix.as_deref().map(parse_prefix).transpose()?;
            let o = solve(&read(&problem)?, prefix.as_deref())?;
            write(&out, &o.csv)?;
            o
        }
        Command::Optimize { problem, out } => {
            let o = optimize(&read(&problem)?)?;
            write(&out, &o.csv)?;
            o
        }
        Command::Diagnose { problem, traj, out } => {
            let o = diagnose_trajectory(&read(&problem)?, &read(&traj)?)?;
            write(&out, &o.csv)?;
            o
        }
    };
    print!("{}", output.summary);
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QVAR_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            log::error!("{e}");
            eprintln!("qvar: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
