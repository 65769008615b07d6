//! `ufoctl`: train, sweep, audit and evaluate gate controls from a single
//! JSON configuration.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 divergence or a
//! non-finite value, 1 anything else.

// `!(x > 0.0)` style checks are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, Optimizer, SEED_ENV};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ufoctl", version, about = "Gate optimization experiments on a two-gmon model")]
pub struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed. Overrides the configuration file and UFOCTL_SEED.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, short, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Gate target, e.g. `CZ`, `ISWAP` or `N:1.2:1.5708`.
    #[arg(long, global = true)]
    pub target: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub optimizer: Option<Optimizer>,
    /// Repeat for more log output.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one gate and write checkpoint, trajectory, log and summary.
    Train {
        #[arg(long)]
        iterations: Option<usize>,
        /// Stop once the cost threshold is met.
        #[arg(long)]
        stop_on_success: bool,
        /// Continue from an RL checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Shortest gate time across the N(α, α, γ) family.
    SweepAlpha,
    /// Average fidelity and its spread over the noise grid.
    Robustness {
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Leakage bounds against exact leakage for a trajectory.
    LeakageAudit {
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Cost, fidelity and (with noise) the fidelity spread of a trajectory.
    Evaluate {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

impl Cli {
    /// Effective configuration: file, then seed (flag or environment), then
    /// the remaining flags.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let (mut cfg, source) = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => (ExperimentConfig::default(), config::Source::default()),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.output_dir {
            cfg.output_dir.clone_from(d);
        }
        if let Some(t) = &self.target {
            cfg.target.clone_from(t);
        }
        if let Some(o) = self.optimizer {
            cfg.optimizer = o;
        }
        cfg.propagate_seed();
        cfg.validate(&source)?;
        Ok(cfg)
    }

    pub fn run(&self) -> Result<Vec<PathBuf>, CliError> {
        let p = commands::Prepared::new(self.resolve()?)?;
        log::info!("config {} seed {}", p.stamp.config_hash, p.stamp.seed);
        match &self.command {
            Command::Train { iterations, stop_on_success, resume } => {
                commands::train(&p, *iterations, *stop_on_success, resume.as_deref())
            }
            Command::SweepAlpha => commands::sweep_alpha(&p),
            Command::Robustness { trajectory } => commands::robustness(&p, trajectory),
            Command::LeakageAudit { trajectory } => commands::leakage_audit(&p, trajectory),
            Command::Evaluate { trajectory, sigma, samples } => commands::evaluate_cmd(&p, trajectory, *sigma, *samples),
        }
    }
}
