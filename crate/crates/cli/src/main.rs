use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicekit::experiment::{self, loss_for_kind};
use dicekit::{generate, gradcheck_all, DataSpec, ExperimentConfig, LossKind, TransformKind};

/// Imbalance-aware loss experiments on synthetic data.
#[derive(Parser)]
#[command(name = "dicekit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one configuration over its replicate seeds.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run every combination of losses and neg:pos ratios.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated loss kinds.
        #[arg(long, value_delimiter = ',', default_value = "CE,DSC_selfadj")]
        losses: Vec<LossKind>,
        /// Comma-separated neg:pos ratios.
        #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
        ratios: Vec<f64>,
    },
    /// Tversky loss at each alpha with beta = 1 - alpha.
    SweepTversky {
        #[command(flatten)]
        common: Common,
        /// Comma-separated alphas in (0, 1).
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
        )]
        alphas: Vec<f64>,
    },
    /// Check analytic loss gradients against finite differences.
    Gradcheck {
        /// Random samples per loss kind.
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as CSV.
    GenData {
        /// Experiment config whose `data` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_positive: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        easy_fraction: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus overrides shared by the experiment subcommands.
#[derive(Args)]
struct Common {
    /// JSON file mirroring the experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    ratio: Option<f64>,
    /// Base seed of the generated train and test data.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated replicate seeds.
    #[arg(long, value_delimiter = ',')]
    replicates: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    transform: Option<TransformKind>,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<dicekit::Error> for Failure {
    fn from(e: dicekit::Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", p.display())))?;
            Ok(ExperimentConfig::from_json(&text)?)
        }
    }
}

impl Common {
    fn resolve(&self, default_loss: Option<LossKind>) -> Result<ExperimentConfig, Failure> {
        let mut config = load_config(self.config.as_deref())?;
        if let Some(kind) = self.loss.or(default_loss.filter(|_| self.config.is_none())) {
            config.loss = loss_for_kind(&config, kind);
        }
        if let Some(v) = self.alpha {
            config.loss.alpha = v;
        }
        if let Some(v) = self.beta {
            config.loss.beta = v;
        }
        if let Some(v) = self.gamma {
            config.loss.gamma = v;
        }
        if let Some(v) = self.ratio {
            config.data.ratio = v;
        }
        if let Some(v) = self.seed {
            config.data.seed = v;
        }
        if let Some(v) = &self.replicates {
            config.replicate_seeds = v.clone();
        }
        if let Some(v) = self.epochs {
            config.train.epochs = v;
        }
        if let Some(v) = self.transform {
            config.transform.kind = v;
        }
        config.validate()?;
        Ok(config)
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", p.display()))),
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn csv(rows: &[dicekit::ResultRow]) -> Vec<u8> {
    experiment::to_csv_string(rows).into_bytes()
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { common } => {
            let config = common.resolve(None)?;
            emit(common.out.as_deref(), &csv(&experiment::run(&config)?))
        }
        Command::Sweep {
            common,
            losses,
            ratios,
        } => {
            let config = common.resolve(None)?;
            emit(common.out.as_deref(), &csv(&experiment::sweep(&config, &losses, &ratios)?))
        }
        Command::SweepTversky { common, alphas } => {
            let config = common.resolve(Some(LossKind::Tversky))?;
            emit(common.out.as_deref(), &csv(&experiment::sweep_tversky(&config, &alphas)?))
        }
        Command::Gradcheck { samples, seed, out } => {
            let reports = gradcheck_all(samples as usize, seed)?;
            let mut json = serde_json::to_string_pretty(&reports).map_err(|e| Failure::Runtime(e.to_string()))?;
            json.push('\n');
            emit(out.as_deref(), json.as_bytes())?;
            let failed: Vec<String> = reports
                .iter()
                .filter(|r| !r.passed)
                .map(|r| format!("{} (max rel error {:.3e})", r.loss_kind, r.max_rel_error))
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!("gradient check failed: {}", failed.join(", "))))
            }
        }
        Command::GenData {
            config,
            n_positive,
            ratio,
            easy_fraction,
            dim,
            seed,
            out,
        } => {
            let base = load_config(config.as_deref())?.data;
            let spec = DataSpec {
                n_positive: n_positive.unwrap_or(base.n_positive),
                ratio: ratio.unwrap_or(base.ratio),
                easy_negative_fraction: easy_fraction.unwrap_or(base.easy_negative_fraction),
                feature_dim: dim.unwrap_or(base.feature_dim),
                seed: seed.unwrap_or(base.seed),
                ..base
            };
            spec.validate()?;
            let mut buf = Vec::new();
            generate(&spec)?.write_csv(&mut buf)?;
            emit(out.as_deref(), &buf)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
