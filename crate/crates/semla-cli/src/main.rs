//! `semla`: train, sample, evaluate, align, and benchmark from one binary.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::AppConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "semla", version, about = "3D molecule generation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the model-running subcommands. Config file values are
/// applied first; explicit flags win.
#[derive(Args, Clone)]
struct Common {
    /// key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Training or integration steps, depending on the subcommand
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    schedule_base: Option<f64>,
    #[arg(long)]
    n_mols: Option<usize>,
    #[arg(long)]
    n_atoms: Option<usize>,
    #[arg(long)]
    atoms_per_batch: Option<usize>,
    #[arg(long)]
    self_cond: Option<bool>,
}

impl Common {
    fn resolve(&self) -> Result<AppConfig, CliError> {
        let mut cfg = AppConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.schedule_base {
            cfg.schedule_base = v;
        }
        if let Some(v) = self.n_mols {
            cfg.n_mols = v;
        }
        if let Some(v) = self.n_atoms {
            cfg.n_atoms = Some(v);
        }
        if let Some(v) = self.atoms_per_batch {
            cfg.atoms_per_batch = v;
        }
        if let Some(v) = self.self_cond {
            cfg.self_cond = v;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train on an SDF corpus; writes checkpoints and a loss curve
    Train {
        /// Training corpus (SDF)
        data: PathBuf,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Continue from an existing checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate molecules from a checkpoint into an SDF file
    Sample {
        /// Checkpoint produced by `train`
        checkpoint: PathBuf,
        /// Output SDF path
        #[arg(long)]
        out: PathBuf,
        /// Reference SDF whose size histogram sets atom counts
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score an SDF file; writes per-molecule rows plus a summary
    Eval {
        /// Molecules to score (SDF)
        input: PathBuf,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Reference SDF for the novelty column
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Time model forward passes across latent widths
    BenchLatent {
        /// Comma-separated latent widths, e.g. 32,64,128,256
        #[arg(long, value_delimiter = ',', default_value = "32,64,128,256")]
        dl_grid: Vec<usize>,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rigid-align paired records of two SDF files and report MSE
    Align {
        /// Target molecules (SDF)
        a: PathBuf,
        /// Source molecules rotated/permuted onto the target (SDF)
        b: PathBuf,
    },
}

fn run() -> Result<(), CliError> {
    let cli = Cli::try_parse().map_err(|e| {
        // clap renders its own rich message; classify everything as usage
        // except explicit help/version requests.
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{e}");
                std::process::exit(0);
            }
            _ => CliError::Usage(e.to_string()),
        }
    })?;

    match &cli.command {
        Command::Train {
            data,
            out,
            resume,
            common,
        } => {
            let cfg = common.resolve()?;
            commands::cmd_train(data, out, &cfg, resume.as_deref())
        }
        Command::Sample {
            checkpoint,
            out,
            reference,
            common,
        } => {
            let cfg = common.resolve()?;
            commands::cmd_sample(checkpoint, out, &cfg, reference.as_deref())
        }
        Command::Eval {
            input,
            out,
            reference,
        } => commands::cmd_eval(input, reference.as_deref(), out),
        Command::BenchLatent {
            dl_grid,
            out,
            common,
        } => {
            let cfg = common.resolve()?;
            commands::cmd_bench_latent(dl_grid, &cfg, out)
        }
        Command::Align { a, b } => commands::cmd_align(a, b),
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
