//! Command-line front end: scenario files in, artifact bundles out.
//!
//! Every subcommand takes a scenario JSON file plus a few overrides and
//! delegates to the library's scenario runner. `SENTINEL_THREADS` caps the
//! worker pool used for grid search and bank updates.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sentinel_core::harness::{execute, Overrides, Scenario, Verb};

#[derive(Parser)]
#[command(
    name = "sentinel",
    version,
    about = "Attack-tolerant observer synthesis, estimation, and sensor isolation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario description (JSON).
    scenario: PathBuf,

    /// Replace the scenario's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Write artifacts here instead of the scenario's output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Solver feasibility tolerance.
    #[arg(long, value_name = "TOL")]
    tol_feas: Option<f64>,

    /// Coarse grid step for the decay-rate search.
    #[arg(long, value_name = "STEP")]
    grid_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the scenario's observer designs (one JSON file per subset).
    Synthesize(CommonArgs),
    /// Simulate plant traces and write them as CSV.
    Simulate(CommonArgs),
    /// Run the observer bank over simulated traces and log its votes.
    Estimate(CommonArgs),
    /// Accuse attacked sensors by windowed voting.
    Isolate {
        #[command(flatten)]
        common: CommonArgs,

        /// Attacked-sensor count the isolation bank is built for.
        #[arg(long)]
        q_star: Option<usize>,

        /// Voting window length in steps.
        #[arg(long, value_name = "N")]
        window: Option<usize>,
    },
    /// Synthesize designs and check them independently (margins + sampling).
    Verify(CommonArgs),
    /// Full pipeline for the scenario's mode, with named checks.
    Run(CommonArgs),
}

fn init_thread_pool() {
    if let Ok(raw) = std::env::var("SENTINEL_THREADS") {
        match raw.parse::<usize>() {
            Ok(threads) if threads >= 1 => {
                // A second initialization (e.g. in tests) is harmless; the
                // first pool wins.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
            _ => eprintln!("ignoring SENTINEL_THREADS={raw}: not a positive integer"),
        }
    }
}

fn dispatch(verb: Verb, common: &CommonArgs, q_star: Option<usize>, window: Option<usize>) -> ExitCode {
    let scenario = match Scenario::from_file(&common.scenario) {
        Ok(s) => s,
        Err(err) => {
            eprintln!("error: cannot load {}: {err}", common.scenario.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        tol_feas: common.tol_feas,
        grid_step: common.grid_step,
        q_star,
        window,
    };
    match execute(verb, &scenario, &overrides) {
        Ok(summary) => {
            println!("wrote {} artifacts to {}", summary.artifacts.len(), summary.output.display());
            let mut ok = true;
            for check in &summary.checks {
                let status = if check.pass { "pass" } else { "FAIL" };
                let seed = check
                    .seed
                    .map(|s| format!(" [seed {s}]"))
                    .unwrap_or_default();
                println!("check {}{}: {} ({})", check.name, seed, status, check.detail);
                ok &= check.pass;
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synthesize(common) => dispatch(Verb::Synthesize, common, None, None),
        Command::Simulate(common) => dispatch(Verb::Simulate, common, None, None),
        Command::Estimate(common) => dispatch(Verb::Estimate, common, None, None),
        Command::Isolate {
            common,
            q_star,
            window,
        } => dispatch(Verb::Isolate, common, *q_star, *window),
        Command::Verify(common) => dispatch(Verb::Verify, common, None, None),
        Command::Run(common) => dispatch(Verb::Run, common, None, None),
    }
}
