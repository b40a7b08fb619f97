//! `logloader` command-line entry point.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration error.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use logloader::parallel::Parallelism;
use logloader::{Config, ConfigError};

use manifest::{default_run_path, read_manifest, Invocation, RunDir, Seeds};

/// Caps worker threads for environment stepping, gradients and evaluation.
pub const THREADS_ENV: &str = "LOGLOADER_THREADS";

#[derive(Parser)]
#[command(name = "logloader", version, about = "Forwarder log-loading RL: train, evaluate, sweep, demo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set ppo.learning_rate=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
    /// Run directory; every output of the command goes here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train a PPO agent under the configured curriculum.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Measure success rate of a checkpoint or the scripted oracle.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        /// Defaults to `eval.trials`.
        #[arg(long)]
        trials: Option<u32>,
        /// Defaults to `eval.base_seed`.
        #[arg(long)]
        base_seed: Option<u64>,
        /// Also run the perturbation suite (log size, raised and rough ground).
        #[arg(long)]
        generalization: bool,
    },
    /// Train and evaluate every (arrangement, weight, seed) cell.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "SEPARATE,GRASP_THEN_PLACE,REACH_THEN_REST,FLAT")]
        arrangements: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        weights: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Per-cell epoch budget; defaults to the configured curriculum total.
        #[arg(long)]
        total_epochs: Option<u32>,
        /// Defaults to `eval.trials`.
        #[arg(long)]
        eval_trials: Option<u32>,
    },
    /// Write per-step trajectory records for a checkpoint or the oracle.
    Demo {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 1)]
        episodes: u32,
        /// First episode seed; defaults to `eval.base_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run a previous command from its manifest into a new run directory.
    Replay {
        /// `manifest.json` or the run directory holding it.
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

/// Failure classes, mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        if e.chain().any(|c| c.is::<ConfigError>()) {
            Failure::Config(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn threads_from_env() -> Result<Option<usize>, ConfigError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(Some(n)),
        _ => Err(ConfigError::invalid(THREADS_ENV, format!("expected a positive integer, got `{raw}`"))),
    }
}

fn parallelism(threads: Option<usize>) -> Result<Parallelism> {
    match threads {
        Some(1) => Ok(Parallelism::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring worker threads")?;
            Ok(Parallelism::default())
        }
        None => Ok(Parallelism::default()),
    }
}

fn resolve(config: &Config) -> Result<logloader::Resolved> {
    config.resolve().context("invalid configuration")
}

fn config_error(field: &str, reason: String) -> anyhow::Error {
    ConfigError::invalid(field, reason).into()
}

/// Fill command defaults from the config, producing the invocation stored in
/// the manifest.
fn invocation(cmd: &Command, config: &Config) -> Result<Invocation> {
    let abs = |p: &Option<PathBuf>| -> Result<Option<PathBuf>> {
        p.as_ref()
            .map(|p| std::path::absolute(p).with_context(|| format!("resolving {}", p.display())))
            .transpose()
    };
    Ok(match cmd {
        Command::Train { .. } => Invocation::Train,
        Command::Eval {
            checkpoint,
            oracle,
            trials,
            base_seed,
            generalization,
            ..
        } => {
            if checkpoint.is_none() && !oracle {
                return Err(config_error("checkpoint", "give --checkpoint or --oracle".into()));
            }
            let trials = trials.unwrap_or(config.eval.trials);
            if trials == 0 {
                return Err(config_error("trials", "must be at least 1".into()));
            }
            Invocation::Eval {
                checkpoint: abs(checkpoint)?,
                oracle: *oracle,
                trials,
                base_seed: base_seed.unwrap_or(config.eval.base_seed),
                generalization: *generalization,
            }
        }
        Command::Sweep {
            arrangements,
            weights,
            seeds,
            total_epochs,
            eval_trials,
            ..
        } => {
            let mut names = Vec::new();
            for a in arrangements {
                names.push(commands::parse_arrangement(a)?.name().to_string());
            }
            if names.is_empty() || weights.is_empty() || seeds.is_empty() {
                return Err(config_error("sweep", "arrangements, weights and seeds must be non-empty".into()));
            }
            if let Some(w) = weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
                return Err(config_error("weights", format!("weight {w} must be positive")));
            }
            let total = total_epochs.unwrap_or(config.curriculum.stage_epochs.iter().sum());
            if let Some(a) = names.iter().find_map(|n| {
                let a = commands::parse_arrangement(n).ok()?;
                (total < a.stage_count() as u32).then_some(a)
            }) {
                return Err(config_error(
                    "total_epochs",
                    format!("{total} epochs cannot cover the {} stages of {}", a.stage_count(), a.name()),
                ));
            }
            let eval_trials = eval_trials.unwrap_or(config.eval.trials);
            if eval_trials == 0 {
                return Err(config_error("eval_trials", "must be at least 1".into()));
            }
            Invocation::Sweep {
                arrangements: names,
                weights: weights.clone(),
                seeds: seeds.clone(),
                total_epochs: total,
                eval_trials,
                eval_base_seed: config.eval.base_seed,
            }
        }
        Command::Demo {
            checkpoint,
            oracle,
            episodes,
            seed,
            ..
        } => {
            if checkpoint.is_none() && !oracle {
                return Err(config_error("checkpoint", "give --checkpoint or --oracle".into()));
            }
            Invocation::Demo {
                checkpoint: abs(checkpoint)?,
                oracle: *oracle,
                episodes: *episodes,
                seed: seed.unwrap_or(config.eval.base_seed),
            }
        }
        Command::Replay { .. } => unreachable!("replay has no invocation of its own"),
    })
}

fn execute(
    inv: Invocation,
    config: Config,
    overrides: Vec<String>,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), Failure> {
    let resolved = resolve(&config)?;
    let threads = threads_from_env().map_err(|e| Failure::Config(e.into()))?;
    let mode = parallelism(threads)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| default_run_path(inv.name()));
    let seeds = Seeds {
        env: config.env.seed,
        ppo: config.ppo.seed,
        eval_base: config.eval.base_seed,
    };
    let mut run = RunDir::create(&path, inv.clone(), config.to_table(), overrides, seeds, threads)
        .map_err(Failure::Runtime)?;
    if !quiet {
        eprintln!("run directory: {}", run.path.display());
    }
    let outcome = match inv {
        Invocation::Train => commands::train(&mut run, &resolved, mode, quiet),
        Invocation::Eval { .. } => commands::eval(&mut run, &resolved, mode),
        Invocation::Sweep { .. } => commands::sweep(&mut run, &resolved, mode, quiet),
        Invocation::Demo { .. } => commands::demo(&mut run, &resolved),
    };
    run.finish(&outcome).map_err(Failure::Runtime)?;
    outcome.map_err(Failure::Runtime)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Replay { manifest, out, quiet } => {
            let m = read_manifest(&manifest).map_err(Failure::Runtime)?;
            let config = Config::from_table(m.config.clone()).context("manifest config")?;
            execute(m.invocation, config, m.overrides, out.as_deref(), quiet)
        }
        cmd => {
            let common = match &cmd {
                Command::Train { common }
                | Command::Eval { common, .. }
                | Command::Sweep { common, .. }
                | Command::Demo { common, .. } => common.clone(),
                Command::Replay { .. } => unreachable!(),
            };
            let (config, _) = Config::load(common.config.as_deref(), &common.overrides).context("loading configuration")?;
            let inv = invocation(&cmd, &config)?;
            execute(inv, config, common.overrides, common.out.as_deref(), common.quiet)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
