mod blobs;
mod output;
mod reports;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Batch tools for erasure-coded storage with audited incentives.
#[derive(Parser, Debug)]
#[command(name = "hotstore", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the scenario-driven subcommands.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Override the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the scenario trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Omit wall-clock timestamps so repeated runs are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
    /// Run even if the economic parameters fail the incentive checks.
    #[arg(long)]
    pub force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Erasure-code and commit a file; writes manifest.json and chunk files.
    Prepare(blobs::PrepareArgs),
    /// Rebuild a file (or byte range) from a manifest and any k valid chunks.
    Reassemble(blobs::ReassembleArgs),
    /// Evaluate the incentive inequalities for a parameter file (TOML or JSON).
    EconCheck(reports::EconCheckArgs),
    /// Durability and availability across a parameter grid.
    Reliability(reports::ReliabilityArgs),
    /// Run the scenario's strategy profile and report utilities.
    Simulate(run::ScenarioArgs),
    /// Compare honest play against unilateral deviations.
    NashTest(run::NashArgs),
    /// Measure joint deviations by small coalitions.
    CoalitionTest(run::CoalitionArgs),
    /// Run the experiment declared in a scenario file and write every report.
    Run(run::ScenarioArgs),
}

/// Outcome of a subcommand that completed without I/O or config errors.
pub enum Verdict {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare(a) => blobs::prepare(a),
        Command::Reassemble(a) => blobs::reassemble(a),
        Command::EconCheck(a) => reports::econ_check(a),
        Command::Reliability(a) => reports::reliability(a),
        Command::Simulate(a) => run::simulate(a),
        Command::NashTest(a) => run::nash(a),
        Command::CoalitionTest(a) => run::coalition(a),
        Command::Run(a) => run::run(a),
    };
    match result {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
