//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::bench::{check_scaling, run_bench};
use crate::commands::{cmd_eval, cmd_score, cmd_synth, cmd_train};
use crate::config::{Overrides, RunConfig};
use crate::error::{exit_code, EXIT_DATA, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "varad", version, about = "Autoregressive anomaly detection on token grids")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on `<dataset>/<category>/train/good`.
    Train,
    /// Write an anomaly map for each input image or token file.
    Score { inputs: Vec<PathBuf> },
    /// Score the test split and write pixel and image metrics.
    Eval,
    /// Generate a synthetic category.
    Synth {
        #[arg(long, default_value_t = 32)]
        n_train: usize,
        /// Test images per split (good and defective).
        #[arg(long, default_value_t = 16)]
        n_test: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
    },
    /// Time the scan against sequence length and scoring against resolution.
    Bench {
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    match &cli.command {
        Command::Train => {
            let summary = cmd_train(cfg)?;
            println!("checkpoint: {}", summary.checkpoint.display());
        }
        Command::Score { inputs } => {
            let summary = cmd_score(cfg, cli.overrides.config.is_some(), inputs)?;
            if !summary.failed.is_empty() {
                return Ok(EXIT_DATA);
            }
        }
        Command::Eval => {
            cmd_eval(cfg)?;
        }
        Command::Synth { n_train, n_test, size } => {
            cmd_synth(cfg, *n_train, *n_test, *size)?;
        }
        Command::Bench { repeats } => {
            cfg.validate()?;
            let report = run_bench(cfg, *repeats)?;
            let csv = report.csv();
            std::fs::create_dir_all(&cfg.run.out)?;
            let path = cfg.run.out.join("bench.csv");
            std::fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            print!("{csv}");
            check_scaling(&report)?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, A>(args: I) -> u8
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = RunConfig::resolve(&cli.overrides).and_then(|cfg| {
        if cfg.run.threads > 0 {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.run.threads).build()?;
            pool.install(|| dispatch(&cli, &cfg))
        } else {
            dispatch(&cli, &cfg)
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(["varad", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["varad", "train", "--threads", "many"]), EXIT_USAGE);
        let help = Cli::try_parse_from(["varad", "--help"]).unwrap_err();
        assert!(!help.use_stderr());
    }
}
