use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ipd_cli::{run_experiment, ExperimentSpec, Kind, DEFAULT_OUT_DIR, OUT_DIR_ENV};
use ipd_dqn::DqnConfig;

/// Self-play Q-learning on the iterated prisoner's dilemma.
#[derive(Parser)]
#[command(name = "ipdq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory [default: $IPDQ_OUT_DIR or ./ipdq-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides every seed in the spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for runs and sweep cells.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One learning run: trajectory, Q-gap series and summary.
    Trajectory,
    /// Cooperation probability over an (alpha, epsilon, g, gamma) grid.
    Sweep,
    /// Bellman fixed points and equilibrium checks of all 16 profiles.
    Fixedpoint,
    /// Full verification suite; exits nonzero if a mandatory check fails.
    Verify,
    /// Hitting-time scaling with the step size.
    Rate,
    /// Deep Q-network self-play.
    Dqn {
        /// Use the full-size batch and replay capacity.
        #[arg(long)]
        paper_scale: bool,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let kind = match cli.command {
        Command::Trajectory => Kind::Trajectory,
        Command::Sweep => Kind::Sweep,
        Command::Fixedpoint => Kind::Fixedpoint,
        Command::Verify => Kind::Verify,
        Command::Rate => Kind::Rate,
        Command::Dqn { .. } => Kind::Dqn,
    };
    let mut spec = match &cli.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            ExperimentSpec::from_json(&text, kind).with_context(|| format!("in {}", path.display()))?
        }
        None => ExperimentSpec::default_for(kind),
    };
    if let Some(seed) = cli.common.seed {
        spec.set_seed(seed);
    }
    if let (Command::Dqn { paper_scale: true }, ExperimentSpec::Dqn(s)) = (&cli.command, &mut spec) {
        let full = DqnConfig::paper_scale();
        s.config.batch_size = full.batch_size;
        s.config.buffer_capacity = full.buffer_capacity;
    }
    let out = cli
        .common
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let outcome = run_experiment(&spec, &out, cli.common.jobs)?;
    for f in &outcome.files {
        println!("{}", f.display());
    }
    if !outcome.success {
        eprintln!("{} checks failed; see the report in {}", kind.as_str(), out.display());
    }
    Ok(outcome.success)
}
