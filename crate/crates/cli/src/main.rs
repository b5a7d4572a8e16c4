use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use convexmp::pipeline::{run_command, Command, Format};
use convexmp::scenario::{load_scenario, Overrides};

/// Simulate parabolic systems with values in a convex set and check their
/// maximum principles.
#[derive(Parser, Debug)]
#[command(name = "convexmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Integrate the scenario and dump snapshots with a manifest
    Simulate(Args),
    /// Sample the compatibility condition between K and the coefficients
    CheckCompat(Args),
    /// Weak and strong maximum-principle reports
    VerifyMp(Args),
    /// Inequality residuals and the supersolution check
    VerifyViscosity(Args),
    /// Everything above, in order
    All(Args),
}

#[derive(clap::Args, Debug)]
struct Args {
    /// Built-in scenario name or path to a scenario JSON file
    #[arg(long)]
    scenario: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Grid spacing override
    #[arg(long)]
    h: Option<f64>,
    /// Final time override
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Residual tolerance for the inequality checks
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    format: OutFormat,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum OutFormat {
    Json,
    CsvSummary,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CONVEXMP_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::CheckCompat(a) => (Command::CheckCompat, a),
        Cmd::VerifyMp(a) => (Command::VerifyMp, a),
        Cmd::VerifyViscosity(a) => (Command::VerifyViscosity, a),
        Cmd::All(a) => (Command::All, a),
    };
    let overrides = Overrides { h: args.h, t_end: args.t_end, seed: args.seed, tol: args.tol };
    let scenario = match load_scenario(&args.scenario, &overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let format = match args.format {
        OutFormat::Json => Format::Json,
        OutFormat::CsvSummary => Format::CsvSummary,
    };
    match run_command(command, &scenario, &args.out, format) {
        Ok(outcome) => {
            for (stem, report) in &outcome.reports {
                let pass = report.get("pass").and_then(|p| p.as_bool()).unwrap_or(true);
                eprintln!("{stem:<14} {}", if pass { "pass" } else { "FAIL" });
            }
            ExitCode::from(if outcome.passed { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 1 } else { 2 })
        }
    }
}
