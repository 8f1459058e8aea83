mod commands;
mod output;

use clap::{Args, Parser, Subcommand, ValueEnum};
use output::Format;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "persuade", version, about = "Solve, verify and simulate repeated binary-state persuasion problems")]
pub struct Cli {
    /// Problem file (JSON).
    #[arg(long, global = true)]
    pub problem: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Fractional digits of decimal approximations.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=50))]
    pub digits: u8,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for grid checks, the oracle and simulation.
    #[arg(long, global = true, env = "PERSUADE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Thresholds, optimal cutoff, value and learning time.
    Solve,
    /// Envelope kinks, the threshold ladder or the target chain of the optimal policy.
    Trace(TraceArgs),
    /// Optimal policy against the baselines.
    Compare,
    /// Sufficient optimality conditions and, optionally, the grid oracle.
    Verify(VerifyArgs),
    /// Sample paths or dump the reachable signal tree.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceWhat {
    Envelope,
    Ladder,
    Policy,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[arg(value_enum, default_value_t = TraceWhat::Policy)]
    pub what: TraceWhat,
    /// Shorthand for `trace ladder`.
    #[arg(long)]
    pub ladder: bool,
    /// Cutoff to trace instead of q*.
    #[arg(long)]
    pub q: Option<String>,
    /// Periods to follow the target chain.
    #[arg(long, default_value_t = 50)]
    pub periods: u32,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Cutoff to verify instead of q*.
    #[arg(long)]
    pub q: Option<String>,
    /// Belief grid points of the exact checks (default 257).
    #[arg(long)]
    pub p_points: Option<usize>,
    /// Promise grid points per belief (default 65).
    #[arg(long)]
    pub w_points: Option<usize>,
    /// Also run value iteration and compare with the analytic value.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 120)]
    pub np: usize,
    #[arg(long, default_value_t = 40)]
    pub nw: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Largest accepted |grid − analytic| gap.
    #[arg(long, default_value_t = 0.01)]
    pub gap_tol: f64,
    /// Also solve at doubled resolution and report the refined gap.
    #[arg(long)]
    pub richardson: bool,
    /// Write the grid fixed point as CSV (p, w, V).
    #[arg(long)]
    pub dump_grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Optimal,
    Kg,
    Random,
    Delayed,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::Optimal)]
    pub policy: PolicyKind,
    #[arg(long, default_value_t = 10_000)]
    pub paths: u64,
    #[arg(long, default_value_t = 60)]
    pub horizon: u32,
    /// Per-path CSV (one row per period); `-` for standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emit the reachable signal tree to this depth as CSV instead of sampling.
    #[arg(long)]
    pub tree_depth: Option<u32>,
}

/// A failure with its exit code: 1 I/O, parse or usage; 2 validation; 3 verification.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(msg: impl Into<String>) -> Failure {
        Failure { code: 1, message: msg.into() }
    }
    pub fn validation(msg: impl Into<String>) -> Failure {
        Failure { code: 2, message: msg.into() }
    }
    pub fn verification(msg: impl Into<String>) -> Failure {
        Failure { code: 3, message: msg.into() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
