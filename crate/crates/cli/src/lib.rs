//! Experiment driver for the `spacdc` library: config resolution, the
//! `encode`/`run`/`train`/`audit`/`bench` commands, and their CSV outputs.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::Config;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "spacdc", version, about = "Coded, masked and encrypted distributed computation experiments")]
pub struct Cli {
    /// Flat key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Scenario preset: s1, s2, s3 or s4.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// Override one key (repeatable), applied after the file and scenario.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode and encrypt the input into one share file per worker.
    Encode,
    /// Run a coded job and decode the results.
    Run {
        /// Use shares written by `encode` instead of encoding afresh.
        #[arg(long)]
        from_shares: Option<PathBuf>,
    },
    /// Train a small network with coded (spacdc) or uncoded (conv) backprop.
    Train {
        /// spacdc, conv or both; overrides train.algo.
        #[arg(long)]
        algo: Option<String>,
    },
    /// Statistical check of what colluding workers learn about the input.
    Audit,
    /// Time decoding and encoding.
    Bench,
}

impl Cli {
    /// Resolves the configuration: defaults, then `--config`, `--scenario`,
    /// `--set` overrides, and finally `--seed` and `--out`.
    pub fn resolve(&self) -> Result<Config> {
        let mut cfg = Config::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(name) = &self.scenario {
            cfg.apply_scenario(name)?;
        }
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            let out = out.to_str().ok_or_else(|| CliError::Config("output path is not UTF-8".into()))?;
            cfg.set("output.dir", out)?;
        }
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Command::Encode => commands::encode(&cfg),
        Command::Run { from_shares } => commands::run(&cfg, from_shares.as_deref()),
        Command::Train { algo } => commands::train_cmd(&cfg, algo.as_deref()),
        Command::Audit => commands::audit(&cfg),
        Command::Bench => commands::bench(&cfg),
    }
}
