//! `groupnav`: trial extraction, batch execution, reporting and prediction
//! evaluation for group-space crowd navigation.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod fsio;
mod predict;
mod report;
mod run;
mod trials;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use groupnav_core::prediction::OracleKind;
use groupnav_core::simulator::{Condition, Perception};
use groupnav_core::PolicyKind;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "groupnav",
    version,
    about = "Group-space crowd navigation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the default configuration.
    DefaultConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segment every scene into trials and write the trial lists.
    MakeTrials(Common),
    /// Run every policy on every trial; completed pairs are skipped.
    Run(Common),
    /// Aggregate metrics into CSVs, a table and trace files.
    Report(Common),
    /// Score group-space oracles on each scene's recording.
    EvalPrediction {
        #[command(flatten)]
        common: Common,
        /// Oracles to score, comma separated. Defaults to the configured one.
        #[arg(long, value_delimiter = ',', value_parser = parse_kebab::<OracleKind>)]
        oracles: Vec<OracleKind>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Policies, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_kebab::<PolicyKind>)]
    policies: Vec<PolicyKind>,
    #[arg(long, value_parser = parse_kebab::<Condition>)]
    condition: Option<Condition>,
    #[arg(long, value_parser = parse_kebab::<Perception>)]
    perception: Option<Perception>,
}

/// Parses a kebab-case enum name through its serde representation.
fn parse_kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if !self.policies.is_empty() {
            cfg.policies = self.policies.clone();
        }
        if let Some(c) = self.condition {
            cfg.condition = c;
        }
        if let Some(p) = self.perception {
            cfg.perception = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::DefaultConfig { out } => {
            let text = config::default_config_text();
            match out {
                Some(p) => fsio::write_atomic(&p, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::MakeTrials(c) => {
            let cfg = c.load()?;
            trials::make_trials(&cfg, cfg.condition, cfg.perception)?;
        }
        Command::Run(c) => {
            let cfg = c.load()?;
            let summary = run::run(
                &cfg,
                &run::RunOptions {
                    seed: cfg.seed,
                    workers: cfg.workers,
                    policies: cfg.policies.clone(),
                    condition: c.condition,
                    perception: c.perception,
                },
            )?;
            return Ok(summary.failed == 0);
        }
        Command::Report(c) => {
            let cfg = c.load()?;
            report::report(&cfg.out, &cfg.policies)?;
        }
        Command::EvalPrediction { common, oracles } => {
            let cfg = common.load()?;
            let kinds = if oracles.is_empty() {
                vec![cfg.oracle.kind]
            } else {
                oracles
            };
            predict::run(&cfg, &kinds, cfg.seed)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
