//! `cdrlab`: train continual-domain-randomization experiments, sweep the
//! consolidation strength, run the single-randomization importance study,
//! and report the results.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdrlab_cli::commands;

#[derive(Parser)]
#[command(
    name = "cdrlab",
    version,
    about = "Continual domain randomization lab",
    long_about = "Trains a reaching policy under sequenced simulation randomizations \
                  (with optional elastic weight consolidation), evaluates it zero-shot \
                  on a held-out proxy-real environment, and reports the results."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunFlags {
    /// TOML configuration file; omitted means the built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration field, e.g. --set ppo.lr=1e-4. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Number of seeds (runs use seeds 0..N); overrides the config.
    #[arg(long, value_name = "N")]
    seeds: Option<u64>,

    /// Output directory (default: $CDRLAB_OUT, then ./cdrlab_out).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Redo the experiment from scratch even if this directory already
    /// holds results.
    #[arg(long)]
    force: bool,

    /// Parallel runs (default: the machine's available cores).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

impl RunFlags {
    fn into_args(self) -> commands::RunArgs {
        commands::RunArgs {
            config: self.config,
            set: self.set,
            seeds: self.seeds,
            out: self.out,
            force: self.force,
            workers: self.workers,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train every strategy in the configured matrix.
    Train(RunFlags),
    /// Train the consolidating strategies across the strength grid
    /// {1, 5} x 10^0..4.
    SweepLambda(RunFlags),
    /// Train each randomization family alone (plus the ideal and
    /// all-randomizations baselines) to rank their difficulty.
    Importance(RunFlags),
    /// Summarize a finished output directory: tables and SVG charts.
    Report {
        /// Output directory to summarize (default: $CDRLAB_OUT, then
        /// ./cdrlab_out).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Roll a trained checkpoint through a frozen evaluation environment.
    Eval {
        /// Path to a checkpoint.json produced by a training run.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,

        /// Evaluation environment: ideal_sim or proxy_real.
        #[arg(long, default_value = "proxy_real")]
        env: String,

        /// Episodes to roll out.
        #[arg(long, default_value_t = 10)]
        episodes: usize,

        /// Seed of the evaluation environment's random streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,

        /// Average squared distances in the target-distance metric.
        #[arg(long)]
        squared_distance: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(flags) => commands::cmd_train(&flags.into_args()),
        Command::SweepLambda(flags) => commands::cmd_sweep_lambda(&flags.into_args()),
        Command::Importance(flags) => commands::cmd_importance(&flags.into_args()),
        Command::Report { out } => commands::cmd_report(out.as_deref()),
        Command::Eval { checkpoint, env, episodes, seed, squared_distance } => {
            commands::cmd_eval(&commands::EvalArgs {
                checkpoint,
                env,
                episodes,
                seed,
                squared_distance,
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
