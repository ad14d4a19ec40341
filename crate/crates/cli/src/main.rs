//! `learnsparse` command-line driver.
//!
//! Exit status: 0 on success, 1 on configuration or data errors, 2 when
//! training diverges.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use learnsparse::{Error, Result};

use crate::commands::SparsifyArgs;
use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "learnsparse", version, about = "Learned edge sampling for GCN training")]
struct Cli {
    /// Print the full default configuration and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the configured method; writes metrics.csv, checkpoint.bin, summary.json.
    Train {
        config: PathBuf,
        /// Continue from out_dir/checkpoint.bin.
        #[arg(long)]
        resume: bool,
    },
    /// Train with encoder updates kept only when validation F1 does not drop.
    TrainConditional {
        config: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Ensemble predictions of a trained checkpoint.
    Infer {
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Draw one sparse subgraph from a trained checkpoint.
    Sparsify {
        config: PathBuf,
        /// Edge percentage; defaults to run.q.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train and evaluate every method x q x seed combination.
    Sweep { config: PathBuf },
    /// Write the configured synthetic graph as a graph directory.
    Gen {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo checks of the sampling error bounds.
    TheoryCheck { config: PathBuf },
    /// Same as --dump-defaults.
    DumpDefaults,
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { config, resume } => report_train(&ExperimentConfig::load(&config)?, false, resume),
        Cmd::TrainConditional { config, resume } => report_train(&ExperimentConfig::load(&config)?, true, resume),
        Cmd::Infer { config, checkpoint } => {
            let cfg = ExperimentConfig::load(&config)?;
            let f1 = commands::infer(&cfg, checkpoint.as_deref())?;
            println!("test micro-F1 {f1:.4}; predictions in {}", cfg.out_dir.display());
            Ok(())
        }
        Cmd::Sparsify {
            config,
            q,
            seed,
            checkpoint,
            output,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let args = SparsifyArgs {
                q,
                seed,
                checkpoint: checkpoint.as_deref(),
                output,
            };
            let (path, edges) = commands::sparsify(&cfg, args)?;
            println!("{edges} edges written to {}", path.display());
            Ok(())
        }
        Cmd::Sweep { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let n = commands::sweep(&cfg)?;
            println!("{n} runs written to {}", cfg.out_dir.display());
            Ok(())
        }
        Cmd::Gen { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (dir, h) = commands::gen(&cfg, output)?;
            println!("graph written to {}", dir.display());
            println!("{}", serde_json::to_string(&h).expect("plain data serializes"));
            Ok(())
        }
        Cmd::TheoryCheck { config } => {
            commands::theory(&ExperimentConfig::load(&config)?)?;
            Ok(())
        }
        Cmd::DumpDefaults => {
            print!("{}", commands::dump_defaults());
            Ok(())
        }
    }
}

fn report_train(cfg: &ExperimentConfig, conditional: bool, resume: bool) -> Result<()> {
    let s = commands::train(cfg, conditional, resume)?;
    println!(
        "{} epochs, best epoch {} (val micro-F1 {:.4}), test micro-F1 {:.4}, macro-F1 {:.4}",
        s.epochs_run, s.best_epoch, s.best_val_micro_f1, s.test_micro_f1, s.test_macro_f1
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let cmd = match (cli.dump_defaults, cli.cmd) {
        (true, _) => Cmd::DumpDefaults,
        (false, Some(c)) => c,
        (false, None) => {
            eprintln!("error: no command given (try --help)");
            return ExitCode::from(1);
        }
    };
    match run(cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Diverged { .. }) { 2 } else { 1 })
        }
    }
}
