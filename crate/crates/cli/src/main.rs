//! `xlcrf`: train, apply and evaluate CRF taggers with cross-lingual
//! transfer.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or configuration error,
//! 3 data error, 4 numeric error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }

    pub fn check(msg: impl Into<String>) -> Self {
        CliError { code: 1, message: msg.into() }
    }

    /// Prefixes the message, keeping the code.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        CliError {
            code: self.code,
            message: format!("{what}: {}", self.message),
        }
    }
}

impl From<xlcrf::Error> for CliError {
    fn from(e: xlcrf::Error) -> Self {
        use xlcrf::Error as E;
        let code = match &e {
            E::Config(_) => 2,
            E::NonFinite(_) | E::TooLarge(_) | E::InvalidLattice(_) => 4,
            _ => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "xlcrf", version, about = "Neural and log-linear CRF taggers with cross-lingual transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the commands that resolve an experiment config.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for gradient accumulation and decoding.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// loglinear, neural-mono or neural-xling.
    #[arg(long)]
    model_kind: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let cwd = std::path::Path::new("");
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim(), cwd)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.mu {
            cfg.mu = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = &self.model_kind {
            cfg.model_kind = v.parse().map_err(CliError::usage)?;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes model.bin, history.jsonl, metrics.json and the
    /// resolved config into the output directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Tag a token file (one token per line, optional second column).
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Language of the input; defaults to the model's target language.
        #[arg(long)]
        language: Option<String>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Score predictions against gold with exact-span entity F1.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of a fresh model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 30)]
        samples: usize,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
        /// Corrupt the analytic gradient of this parameter group.
        #[arg(long, value_name = "GROUP")]
        inject_fault: Option<String>,
    },
    /// Train once per trade-off value and tabulate dev F1.
    SweepMu {
        #[command(flatten)]
        common: Common,
        /// Comma-separated values, e.g. `0,0.5,1`.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
    /// Write a synthetic two-language corpus and manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2100)]
        target_sentences: usize,
        #[arg(long, default_value_t = 10_000)]
        source_sentences: usize,
    },
}

fn init_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot start thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common } => {
            init_threads(common.threads)?;
            let cfg = common.resolve()?;
            commands::train(&cfg).map(|_| ())
        }
        Command::Tag {
            model,
            input,
            output,
            language,
            threads,
        } => {
            init_threads(threads)?;
            commands::tag(&model, &input, &output, language.as_deref())
        }
        Command::Eval { gold, pred, json } => commands::eval(&gold, &pred, json.as_deref()),
        Command::Gradcheck {
            common,
            epsilon,
            samples,
            threshold,
            inject_fault,
        } => {
            init_threads(common.threads)?;
            let cfg = common.resolve()?;
            commands::gradcheck(&cfg, epsilon, samples, threshold, inject_fault)
        }
        Command::SweepMu { common, values } => {
            init_threads(common.threads)?;
            let cfg = common.resolve()?;
            commands::sweep_mu(&cfg, &values)
        }
        Command::Generate {
            out,
            seed,
            target_sentences,
            source_sentences,
        } => commands::generate(&out, seed, target_sentences, source_sentences),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
