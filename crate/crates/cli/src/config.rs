//! Flat `key = value` experiment configuration.
//!
//! Resolution order: built-in defaults, then the config file, then command
//! line flags. `#` starts a comment. Relative paths in a file resolve
//! against the file's directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use xlcrf::loglinear::LogLinearTrainConfig;
use xlcrf::neural::{AdaDeltaConfig, Dims, NeuralConfig, ScorerKind};
use xlcrf::training::{Selection, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LogLinear,
    NeuralMono,
    NeuralXling,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "loglinear" => Ok(ModelKind::LogLinear),
            "neural-mono" => Ok(ModelKind::NeuralMono),
            "neural-xling" => Ok(ModelKind::NeuralXling),
            other => Err(format!(
                "unknown model kind `{other}` (expected loglinear, neural-mono or neural-xling)"
            )),
        }
    }
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogLinear => "loglinear",
            ModelKind::NeuralMono => "neural-mono",
            ModelKind::NeuralXling => "neural-xling",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub manifest: Option<PathBuf>,
    pub model_kind: ModelKind,
    pub seed: u64,
    pub mu: f64,
    pub out: PathBuf,

    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    /// Upper bound on sentences taken from each source corpus.
    pub source_size: usize,

    pub dims: Dims,
    pub xling_tag_emissions: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub adadelta: AdaDeltaConfig,
    pub checkpoint_every: usize,
    pub selection: Selection,

    /// `None` picks the size-dependent default.
    pub l2: Option<f64>,
    pub lbfgs_max_iter: usize,
    pub lbfgs_tol: f64,
    pub conjoin_language: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let ll = LogLinearTrainConfig::default();
        ExperimentConfig {
            manifest: None,
            model_kind: ModelKind::NeuralXling,
            seed: 1,
            mu: 1.0,
            out: PathBuf::from("out"),
            train_size: 100,
            dev_size: 1000,
            test_size: 1000,
            source_size: 10_000,
            dims: Dims::default(),
            xling_tag_emissions: false,
            epochs: 100,
            batch_size: 32,
            adadelta: AdaDeltaConfig::default(),
            checkpoint_every: 10,
            selection: Selection::BestDev,
            l2: None,
            lbfgs_max_iter: ll.max_iter,
            lbfgs_tol: ll.tol,
            conjoin_language: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::usage(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str, base_dir: &Path) -> Result<(), CliError> {
        let d = &mut self.dims;
        match key {
            "manifest" => self.manifest = (!value.is_empty()).then(|| base_dir.join(value)),
            "model_kind" => self.model_kind = value.parse().map_err(CliError::usage)?,
            "seed" => self.seed = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "out" => self.out = base_dir.join(value),
            "train_size" => self.train_size = parse(key, value)?,
            "dev_size" => self.dev_size = parse(key, value)?,
            "test_size" => self.test_size = parse(key, value)?,
            "source_size" => self.source_size = parse(key, value)?,
            "r1" => d.r1 = parse(key, value)?,
            "r2" => d.r2 = parse(key, value)?,
            "r3" => d.r3 = parse(key, value)?,
            "q" => d.q = parse(key, value)?,
            "d_char" => d.d_char = parse(key, value)?,
            "d_char_embed" => d.d_char_embed = parse(key, value)?,
            "d_word" => d.d_word = parse(key, value)?,
            "lstm_layers" => d.lstm_layers = parse(key, value)?,
            "lstm_hidden" => d.lstm_hidden = parse(key, value)?,
            "xling_tag_emissions" => self.xling_tag_emissions = parse_bool(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "adadelta_rho" => self.adadelta.rho = parse(key, value)?,
            "adadelta_eps" => self.adadelta.eps = parse(key, value)?,
            "learning_rate" => self.adadelta.lr = parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, value)?,
            "selection" => {
                self.selection = match value {
                    "best-dev" => Selection::BestDev,
                    "final-epoch" => Selection::FinalEpoch,
                    _ => return Err(CliError::usage(format!("invalid selection `{value}`"))),
                }
            }
            "l2" => {
                self.l2 = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "lbfgs_max_iter" => self.lbfgs_max_iter = parse(key, value)?,
            "lbfgs_tol" => self.lbfgs_tol = parse(key, value)?,
            "conjoin_language" => self.conjoin_language = parse_bool(key, value)?,
            _ => return Err(CliError::usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str, base_dir: &Path) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim(), base_dir)
                .map_err(|e| CliError::usage(format!("config line {}: {}", lineno + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text, path.parent().unwrap_or(Path::new(".")))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.dims.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(CliError::usage(format!("mu must be >= 0, got {}", self.mu)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(CliError::usage("epochs and batch_size must be positive"));
        }
        if self.train_size == 0 || self.dev_size == 0 || self.test_size == 0 {
            return Err(CliError::usage("split sizes must be positive"));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn render(&self) -> String {
        let d = &self.dims;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv(
            "manifest",
            self.manifest.as_ref().map_or("".into(), |p| p.display().to_string()),
        );
        kv("model_kind", self.model_kind.name().into());
        kv("seed", self.seed.to_string());
        kv("mu", self.mu.to_string());
        kv("out", self.out.display().to_string());
        kv("train_size", self.train_size.to_string());
        kv("dev_size", self.dev_size.to_string());
        kv("test_size", self.test_size.to_string());
        kv("source_size", self.source_size.to_string());
        kv("r1", d.r1.to_string());
        kv("r2", d.r2.to_string());
        kv("r3", d.r3.to_string());
        kv("q", d.q.to_string());
        kv("d_char", d.d_char.to_string());
        kv("d_char_embed", d.d_char_embed.to_string());
        kv("d_word", d.d_word.to_string());
        kv("lstm_layers", d.lstm_layers.to_string());
        kv("lstm_hidden", d.lstm_hidden.to_string());
        kv("xling_tag_emissions", self.xling_tag_emissions.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("adadelta_rho", self.adadelta.rho.to_string());
        kv("adadelta_eps", self.adadelta.eps.to_string());
        kv("learning_rate", self.adadelta.lr.to_string());
        kv("checkpoint_every", self.checkpoint_every.to_string());
        kv(
            "selection",
            match self.selection {
                Selection::BestDev => "best-dev".into(),
                Selection::FinalEpoch => "final-epoch".into(),
            },
        );
        kv("l2", self.l2.map_or("auto".into(), |v| v.to_string()));
        kv("lbfgs_max_iter", self.lbfgs_max_iter.to_string());
        kv("lbfgs_tol", self.lbfgs_tol.to_string());
        kv("conjoin_language", self.conjoin_language.to_string());
        out
    }

    pub fn neural_config(&self) -> NeuralConfig {
        NeuralConfig {
            dims: self.dims,
            scorer: if self.model_kind == ModelKind::NeuralMono {
                ScorerKind::Mono
            } else {
                ScorerKind::Xling
            },
            xling_tag_emissions: self.xling_tag_emissions,
            seed: self.seed,
        }
    }

    pub fn train_config(&self, checkpoint_dir: Option<PathBuf>) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            adadelta: self.adadelta,
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir,
            selection: self.selection,
            record_wall_time: false,
        }
    }

    pub fn loglinear_config(&self) -> LogLinearTrainConfig {
        LogLinearTrainConfig {
            max_iter: self.lbfgs_max_iter,
            tol: self.lbfgs_tol,
            l2: self.l2.unwrap_or_else(|| LogLinearTrainConfig::default_l2(self.train_size)),
            ..LogLinearTrainConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_render() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(
            "model_kind = loglinear\nmu = 0.5 # comment\nlstm_hidden=7\nl2 = 0.3\nout = /runs/a\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.model_kind, ModelKind::LogLinear);
        assert_eq!(cfg.mu, 0.5);
        assert_eq!(cfg.dims.lstm_hidden, 7);
        let mut again = ExperimentConfig::default();
        again.apply_text(&cfg.render(), Path::new("/")).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_text("colour = blue", Path::new(".")).is_err());
        assert!(cfg.apply_text("epochs = many", Path::new(".")).is_err());
        assert!(cfg.apply_text("just text", Path::new(".")).is_err());
    }
}
