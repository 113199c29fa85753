//! `costate` — batch front-end: load a model file, run simulations and
//! condition checks, emit reports and plot-data files.
//!
//! Exit codes: 0 success (and membership), 1 negative condition check,
//! 2 usage or configuration error, 3 numeric failure.

mod commands;
mod report;

use clap::{Args, Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "costate",
    version,
    about = "Co-state arcs, cost-gradient limits, and transversality checks for infinite-horizon optimal control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the reference process and write the trajectory CSV.
    Simulate(SimulateArgs),
    /// Transition matrix and cost gradient along the reference process.
    Gradient(GradientArgs),
    /// Co-state limit of the cost-gradient integrals over a horizon schedule.
    Ak(AkArgs),
    /// Sampled limiting-gradient membership check at infinity.
    Wakk(WakkArgs),
    /// Built-in end-to-end regression suite (planar | oscillator | ramsey).
    Verify(VerifyArgs),
    /// Growth-model diagnostics: stationary point and saddle path.
    Ramsey(RamseyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Model file path, or a built-in name (planar | oscillator | ramsey).
    #[arg(long)]
    model: String,
    /// Output directory for reports and CSV files.
    #[arg(long, default_value = ".")]
    out: String,
    /// Omit the timestamp field from reports (byte-identical reruns).
    #[arg(long, default_value_t = false)]
    no_timestamp: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Integration end time.
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    /// Absolute and relative integrator tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Trajectory output format.
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
}

#[derive(Args)]
struct GradientArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Horizon of the sensitivity computation.
    #[arg(long, default_value_t = 12.0)]
    theta: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct AkArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Smallest scheduled horizon.
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    theta_min: f64,
    /// Largest scheduled horizon.
    #[arg(long, default_value_t = 40.0 * std::f64::consts::PI)]
    theta_max: f64,
    /// Number of horizon levels.
    #[arg(long, default_value_t = 12)]
    levels: usize,
    /// Convergence window (trailing partials compared pairwise).
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Convergence tolerance on the tail diameter.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Args)]
struct WakkArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    theta_min: f64,
    #[arg(long, default_value_t = 40.0 * std::f64::consts::PI)]
    theta_max: f64,
    #[arg(long, default_value_t = 12)]
    levels: usize,
    /// Samples per schedule level.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Membership tolerance.
    #[arg(long, default_value_t = 5e-2)]
    tol: f64,
    /// Sampling seed (reports are byte-identical for a fixed seed).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Initial co-state override, comma-separated (defaults to the model's
    /// reference arc).
    #[arg(long)]
    psi0: Option<String>,
    /// Also run the sequence-wise check over phase-shifted horizon
    /// sequences.
    #[arg(long, default_value_t = false)]
    akk: bool,
    /// Number of phase-shifted sequences for the sequence-wise check.
    #[arg(long, default_value_t = 4)]
    sequences: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Built-in suite name: planar | oscillator | ramsey.
    name: String,
    /// Optional report path.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct RamseyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Path horizon.
    #[arg(long, default_value_t = 60.0)]
    horizon: f64,
    /// Landing tolerance of the backward shoot.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Gradient(args) => commands::gradient(&args),
        Command::Ak(args) => commands::ak(&args),
        Command::Wakk(args) => commands::wakk(&args),
        Command::Verify(args) => commands::verify(&args),
        Command::Ramsey(args) => commands::ramsey(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
