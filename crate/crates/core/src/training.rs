//! Joint target/source training.
//!
//! The neural objective is
//!
//! ```text
//! L(θ) = −Σ_{D_τ} log p(t | w, τ) − μ Σ_i Σ_{D_σi} log p(t | w, σ_i)
//! ```
//!
//! Every epoch shuffles the union of target and source sentences and walks
//! it in batches; source sentences carry weight μ. After each epoch the
//! model is scored on the dev set and the best epoch (earliest on ties) is
//! kept.
//!
//! With μ = 0 the sources are dropped before anything else happens, so the
//! vocabulary, the initialization and the batch schedule are exactly those
//! of target-only training.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::write_atomic;
use crate::corpus::{LabeledSentence, Sentence, TagSet};
use crate::error::{Error, Result};
use crate::eval::{entity_f1, EvalReport};
use crate::loglinear::features::FeatureTemplateSet;
use crate::loglinear::{train_lbfgs, LogLinearModel, LogLinearTrainConfig, LogLinearTrainReport};
use crate::neural::{AdaDelta, AdaDeltaConfig, NeuralConfig, NeuralModel};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct SourceCorpus {
    pub language: String,
    pub train: Vec<LabeledSentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferTask {
    pub target_language: String,
    pub target_train: Vec<LabeledSentence>,
    pub sources: Vec<SourceCorpus>,
    pub mu: f64,
    pub dev: Vec<LabeledSentence>,
}

impl TransferTask {
    pub fn monolingual(language: impl Into<String>, train: Vec<LabeledSentence>, dev: Vec<LabeledSentence>) -> Self {
        TransferTask {
            target_language: language.into(),
            target_train: train,
            sources: Vec::new(),
            mu: 1.0,
            dev,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::Config(format!("mu must be a finite value >= 0, got {}", self.mu)));
        }
        if self.target_train.is_empty() {
            return Err(Error::Config("target training set is empty".into()));
        }
        let wrong = |set: &[LabeledSentence], lang: &str, what: &str| -> Result<()> {
            match set.iter().find(|s| s.language() != lang) {
                Some(s) => Err(Error::Config(format!(
                    "{what} sentence in language `{}`, expected `{lang}`",
                    s.language()
                ))),
                None => Ok(()),
            }
        };
        wrong(&self.target_train, &self.target_language, "target")?;
        wrong(&self.dev, &self.target_language, "dev")?;
        for src in &self.sources {
            if src.language == self.target_language {
                return Err(Error::Config(format!("source language `{}` equals the target", src.language)));
            }
            wrong(&src.train, &src.language, "source")?;
        }
        Ok(())
    }

    /// The task actually trained: sources removed when μ = 0.
    pub fn effective(&self) -> TransferTask {
        let mut t = self.clone();
        if t.mu == 0.0 {
            t.sources.clear();
        }
        t
    }

    /// Target first, then sources in order.
    pub fn languages(&self) -> Vec<String> {
        std::iter::once(self.target_language.clone())
            .chain(self.sources.iter().map(|s| s.language.clone()))
            .collect()
    }

    /// Every training sentence with its objective weight.
    pub fn weighted(&self) -> Vec<(&LabeledSentence, f64)> {
        let mut out: Vec<(&LabeledSentence, f64)> = self.target_train.iter().map(|s| (s, 1.0)).collect();
        for src in &self.sources {
            out.extend(src.train.iter().map(|s| (s, self.mu)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Best dev F1, earliest epoch on ties.
    BestDev,
    FinalEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adadelta: AdaDeltaConfig,
    /// Write `epoch_<N>.model` every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub selection: Selection,
    /// Fill `wall_ms` in the history. Off by default because timings make
    /// otherwise identical runs produce different history files.
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            seed: 0,
            adadelta: AdaDeltaConfig::default(),
            checkpoint_every: 0,
            checkpoint_dir: None,
            selection: Selection::BestDev,
            record_wall_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_p: f64,
    pub dev_r: f64,
    pub dev_f1: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_model: NeuralModel,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub history: Vec<EpochRecord>,
}

/// `−[Σ_target log p + μ Σ_sources log p]` and its gradient.
pub fn joint_loss(
    model: &NeuralModel,
    target_batch: &[LabeledSentence],
    source_batches: &[&[LabeledSentence]],
    mu: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(mu >= 0.0) {
        return Err(Error::Config(format!("mu must be >= 0, got {mu}")));
    }
    let mut batch: Vec<(&LabeledSentence, f64)> = target_batch.iter().map(|s| (s, 1.0)).collect();
    if mu > 0.0 {
        for b in source_batches {
            batch.extend(b.iter().map(|s| (s, mu)));
        }
    }
    model.weighted_loss_and_gradients(&batch)
}

/// A fresh neural model whose vocabularies come from the effective task.
pub fn build_model(task: &TransferTask, config: NeuralConfig, tagset: TagSet) -> Result<NeuralModel> {
    task.validate()?;
    let task = task.effective();
    let sentences: Vec<&LabeledSentence> = task.weighted().into_iter().map(|(s, _)| s).collect();
    NeuralModel::from_corpus(config, tagset, task.languages(), &sentences)
}

/// Predicts every sentence, in parallel when the thread pool allows it.
pub fn predict_neural(model: &NeuralModel, sentences: &[Sentence]) -> Result<Vec<Vec<usize>>> {
    sentences.par_iter().map(|s| model.predict(s)).collect()
}

pub fn evaluate_neural(model: &NeuralModel, gold: &[LabeledSentence]) -> Result<EvalReport> {
    let sentences: Vec<Sentence> = gold.iter().map(|s| s.sentence.clone()).collect();
    entity_f1(gold, &predict_neural(model, &sentences)?, &model.tagset)
}

pub fn evaluate_loglinear(model: &LogLinearModel, gold: &[LabeledSentence]) -> Result<EvalReport> {
    let sentences: Vec<Sentence> = gold.iter().map(|s| s.sentence.clone()).collect();
    entity_f1(gold, &model.predict(&sentences)?, &model.tagset)
}

/// Trains `model` on `task` with AdaDelta.
pub fn train(task: &TransferTask, config: &TrainConfig, model: NeuralModel) -> Result<TrainOutcome> {
    task.validate()?;
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    if task.dev.is_empty() {
        return Err(Error::Config("dev set is empty; model selection is impossible".into()));
    }
    let task = task.effective();
    for lang in task.languages() {
        model.language_index(&lang)?;
    }
    let stream = task.weighted();
    if let Some(dir) = &config.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }

    let mut model = model;
    let mut opt = AdaDelta::new(config.adadelta, model.num_params());
    let mut rng = SplitMix64::new(config.seed ^ 0x7261_696e_5f6f_7264);
    let mut order: Vec<usize> = (0..stream.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(NeuralModel, usize, f64)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        rng.shuffle(&mut order);
        let mut train_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&LabeledSentence, f64)> = chunk.iter().map(|&i| stream[i]).collect();
            let (loss, grad) = model.weighted_loss_and_gradients(&batch)?;
            train_loss += loss;
            opt.step(&mut model.params.values, &grad)?;
        }
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: training loss {train_loss}")));
        }
        let report = evaluate_neural(&model, &task.dev)?;
        let wall_ms = if config.record_wall_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_p: report.precision,
            dev_r: report.recall,
            dev_f1: report.f1,
            wall_ms,
        };
        log::info!(
            "epoch {epoch}: loss {train_loss:.4}, dev F1 {:.2}",
            report.f1
        );
        history.push(record);

        if let Some(dir) = &config.checkpoint_dir {
            if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
                model.save(&dir.join(format!("epoch_{epoch}.model")))?;
            }
        }
        let improves = match (&best, config.selection) {
            (None, _) => true,
            (Some(_), Selection::FinalEpoch) => true,
            (Some((_, _, f1)), Selection::BestDev) => report.f1 > *f1,
        };
        if improves {
            best = Some((model.clone(), epoch, report.f1));
        }
    }

    let (best_model, best_epoch, best_dev_f1) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        best_model,
        best_epoch,
        best_dev_f1,
        history,
    })
}

/// One JSON object per line.
pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn write_history(path: &std::path::Path, history: &[EpochRecord]) -> Result<()> {
    write_atomic(path, history_jsonl(history).as_bytes())
}

/// Log-linear transfer: one L-BFGS run on the unweighted concatenation of
/// target and source training data (μ plays no role).
pub fn train_loglinear(
    task: &TransferTask,
    tagset: TagSet,
    templates: FeatureTemplateSet,
    conjoin_language: bool,
    config: &LogLinearTrainConfig,
) -> Result<(LogLinearModel, LogLinearTrainReport)> {
    task.validate()?;
    let mut data = task.target_train.clone();
    for src in &task.sources {
        data.extend(src.train.iter().cloned());
    }
    let model = LogLinearModel::from_corpus(&data, tagset, templates, conjoin_language, config.l2)?;
    train_lbfgs(&model, &data, config)
}
