//! Command-line driver: data generation, training, evaluation and reports.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ibc_core::eval::MetricSet;
use ibc_core::policy::PolicyKind;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ibc-gaze", version, about = "Implicit vs explicit behavior cloning of facilitator gaze")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,

    /// Worker threads for evaluation; 0 uses every core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Override one setting, e.g. `--set train.steps=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic session CSVs, a manifest and a fold file.
    GenData,
    /// Train the configured policies.
    Train {
        /// Fold number or `all`.
        #[arg(long)]
        fold: Option<String>,
    },
    /// Evaluate trained policies and write report tables.
    Eval {
        #[arg(long)]
        fold: Option<String>,
        /// Comma-separated subset of asm, r2, sparc.
        #[arg(long)]
        metrics: Option<String>,
        /// Energy-model checkpoint to use instead of the run directory's.
        #[arg(long)]
        ibc_checkpoint: Option<PathBuf>,
        /// Regression checkpoint to use instead of the run directory's.
        #[arg(long)]
        mse_checkpoint: Option<PathBuf>,
    },
    /// Roll one episode out and dump its trajectory CSV.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        session: String,
        #[arg(long, default_value_t = 0)]
        start: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a report CSV as text tables.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        metrics: Option<String>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// File, then `--set`, then dedicated flags.
pub fn resolve_config(global: &GlobalArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &global.config {
        let text = std::fs::read_to_string(path).map_err(|e| error::io_err(path, e))?;
        cfg.apply_text(&text, path)?;
    }
    for o in &global.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = global.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn parse_metrics(s: &Option<String>) -> CliResult<Option<MetricSet>> {
    s.as_deref()
        .map(|m| m.parse::<MetricSet>().map_err(CliError::from))
        .transpose()
}

fn set_fold(cfg: &mut RunConfig, fold: &Option<String>) -> CliResult<()> {
    if let Some(f) = fold {
        cfg.set("train.fold", f).map_err(CliError::Validation)?;
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| error::io_err(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = resolve_config(&cli.global)?;
    let force = cli.global.force;
    match &cli.command {
        Command::GenData => {
            let files = commands::gen_data(&cfg, force)?;
            println!("wrote {} sessions to {}", files.len(), cfg.io.data_dir.display());
        }
        Command::Train { fold } => {
            set_fold(&mut cfg, fold)?;
            for s in commands::train(&cfg, force)? {
                println!(
                    "fold {} {}: {} sessions, {} pairs, final loss {:.6}, {} skipped steps",
                    s.fold, s.kind, s.train_sessions, s.train_pairs, s.final_loss, s.skipped
                );
            }
        }
        Command::Eval {
            fold,
            metrics,
            ibc_checkpoint,
            mse_checkpoint,
        } => {
            set_fold(&mut cfg, fold)?;
            let mut overrides = Vec::new();
            if let Some(p) = ibc_checkpoint {
                overrides.push((PolicyKind::Ibc, p.clone()));
            }
            if let Some(p) = mse_checkpoint {
                overrides.push((PolicyKind::Mse, p.clone()));
            }
            let out = commands::eval(&cfg, &overrides, parse_metrics(metrics)?, force)?;
            print!("{}", out.report.render_text());
            if out.aborted > 0 {
                return Err(CliError::Runtime(format!(
                    "{} episode rollouts aborted",
                    out.aborted
                )));
            }
        }
        Command::Rollout {
            checkpoint,
            session,
            start,
            out,
        } => emit(out, &commands::rollout_one(&cfg, checkpoint, session, *start)?)?,
        Command::Report {
            input,
            metrics,
            out,
        } => emit(out, &commands::report(input, parse_metrics(metrics)?)?)?,
    }
    Ok(())
}
