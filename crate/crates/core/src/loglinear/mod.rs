//! Log-linear CRF: `log ψ(t', t, w) = η · f(t', t, w)` over sparse template
//! features, trained by L-BFGS on the (optionally L2-penalized) conditional
//! log-likelihood.
//!
//! Training compiles each sentence once into per-position lists of *slots*.
//! A slot groups the feature ids one attribute produces for every tag (or
//! every tag pair), so lattice scores and expected counts are plain indexed
//! sums and no strings are touched inside the optimizer loop.

pub mod features;
pub mod lbfgs;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, Entry};
use crate::corpus::{LabeledSentence, Sentence, TagSet};
use crate::crf::{self, LogLattice};
use crate::error::{Error, Result};
use crate::parallel::ordered_chunk_sum;

pub use features::{conjoin_language, extract_features, FeatureTemplateSet, Template};
pub use lbfgs::{LbfgsConfig, LbfgsResult, Termination};

use features::{bigram_feature, bigram_word_feature, language_suffix, observation_attributes, tag_feature};

const NONE: u32 = u32::MAX;

/// Feature string to dense id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureIndex {
    ids: HashMap<String, u32>,
    names: Vec<String>,
    frozen: bool,
}

impl FeatureIndex {
    pub fn new() -> Self {
        FeatureIndex::default()
    }

    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if ids.insert(n.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate feature `{n}`")));
            }
        }
        Ok(FeatureIndex {
            ids,
            names,
            frozen: true,
        })
    }

    pub fn get(&self, feature: &str) -> Option<u32> {
        self.ids.get(feature).copied()
    }

    /// Returns the id of `feature`, allocating one unless frozen.
    pub fn intern(&mut self, feature: &str) -> Option<u32> {
        if let Some(id) = self.get(feature) {
            return Some(id);
        }
        if self.frozen {
            return None;
        }
        let id = self.names.len() as u32;
        self.ids.insert(feature.to_string(), id);
        self.names.push(feature.to_string());
        Some(id)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLinearTrainConfig {
    pub memory: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub l2: f64,
}

impl Default for LogLinearTrainConfig {
    fn default() -> Self {
        LogLinearTrainConfig {
            memory: 10,
            tol: 1e-5,
            max_iter: 500,
            l2: 1.0,
        }
    }
}

impl LogLinearTrainConfig {
    /// Default L2 strength for a target training set of `n` sentences:
    /// `1.0` in the 100-sentence regime, `0.1` from 10000 sentences up,
    /// log-linearly interpolated in between.
    pub fn default_l2(n: usize) -> f64 {
        let n = n.clamp(100, 10_000) as f64;
        let frac = (n / 100.0).log10() / 2.0;
        10f64.powf(-frac)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct Meta {
    tagset: TagSet,
    templates: FeatureTemplateSet,
    conjoin_language: bool,
    languages: Vec<String>,
    l2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearModel {
    pub tagset: TagSet,
    pub templates: FeatureTemplateSet,
    pub conjoin_language: bool,
    /// Languages whose conjoined features were indexed.
    pub languages: Vec<String>,
    pub l2: f64,
    pub index: FeatureIndex,
    pub weights: Vec<f64>,
}

/// Feature ids grouped per attribute: `k` entries for tag-unigram slots,
/// `(k + 1) * k` (`prev * k + cur`, BOS as prev `k`) for transition slots.
#[derive(Debug, Clone, Default)]
pub struct SlotTable {
    slots: Vec<Box<[u32]>>,
    cache: HashMap<String, Option<u32>>,
}

impl SlotTable {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct CompiledSentence {
    pub n: usize,
    pub unigram: Vec<Vec<u32>>,
    pub transition: Vec<Vec<u32>>,
    pub gold: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct CompiledCorpus {
    pub slots: SlotTable,
    pub sentences: Vec<CompiledSentence>,
}

impl LogLinearModel {
    /// Indexes every feature that fires on a gold path of `train`, plus
    /// every tag-bigram indicator, and freezes the index with zero weights.
    pub fn from_corpus(
        train: &[LabeledSentence],
        tagset: TagSet,
        templates: FeatureTemplateSet,
        conjoin_language: bool,
        l2: f64,
    ) -> Result<Self> {
        let mut index = FeatureIndex::new();
        let mut languages: Vec<String> = Vec::new();
        for s in train {
            if !languages.iter().any(|l| l == s.language()) {
                languages.push(s.language().to_string());
            }
        }
        let k = tagset.len();
        let add = |index: &mut FeatureIndex, f: &str, lang: &str| {
            index.intern(f);
            if conjoin_language {
                index.intern(&format!("{f}{}", language_suffix(lang)));
            }
        };
        if templates.has(Template::TagBigram) {
            for lang in &languages {
                for p in 0..=k {
                    for t in 0..k {
                        add(&mut index, &bigram_feature(&tagset.name(p), &tagset.name(t)), lang);
                    }
                }
            }
        }
        for s in train {
            if s.len() != s.sentence.len() {
                return Err(Error::Shape("tags and tokens differ in length".into()));
            }
            let lang = s.language();
            for i in 0..s.len() {
                let prev = if i == 0 { tagset.bos_index() } else { s.tags[i - 1] };
                for f in extract_features(&s.sentence, i, prev, s.tags[i], &tagset, &templates) {
                    add(&mut index, &f, lang);
                }
            }
        }
        index.freeze();
        let weights = vec![0.0; index.len()];
        Ok(LogLinearModel {
            tagset,
            templates,
            conjoin_language,
            languages,
            l2,
            index,
            weights,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.tagset.len()
    }

    fn check_language(&self, language: &str) -> Result<()> {
        if self.conjoin_language && !self.languages.iter().any(|l| l == language) {
            return Err(Error::UnknownLanguage(language.to_string()));
        }
        Ok(())
    }

    /// Feature strings for one lattice edge, language-conjoined when enabled.
    pub fn edge_features(&self, sentence: &Sentence, i: usize, prev: usize, tag: usize) -> Vec<String> {
        let f = extract_features(sentence, i, prev, tag, &self.tagset, &self.templates);
        if self.conjoin_language {
            conjoin_language(&f, &sentence.language)
        } else {
            f
        }
    }

    /// Lattice built directly from feature strings; the reference for
    /// the compiled path.
    pub fn lattice_from_strings(&self, sentence: &Sentence) -> Result<LogLattice> {
        self.check_language(&sentence.language)?;
        let k = self.num_tags();
        let score = |i: usize, prev: usize, t: usize| -> f64 {
            self.edge_features(sentence, i, prev, t)
                .iter()
                .filter_map(|f| self.index.get(f))
                .map(|id| self.weights[id as usize])
                .sum()
        };
        Ok(LogLattice::from_fn(sentence.len(), k, |i, prev, t| {
            score(i, prev.unwrap_or(self.tagset.bos_index()), t)
        }))
    }

    fn slot_for(&self, table: &mut SlotTable, key: String, make: impl FnOnce() -> Vec<String>) -> Option<u32> {
        if let Some(&cached) = table.cache.get(&key) {
            return cached;
        }
        let ids: Box<[u32]> = make()
            .iter()
            .map(|f| self.index.get(f).unwrap_or(NONE))
            .collect();
        let slot = if ids.iter().all(|&id| id == NONE) {
            None
        } else {
            table.slots.push(ids);
            Some((table.slots.len() - 1) as u32)
        };
        table.cache.insert(key, slot);
        slot
    }

    fn compile_into(&self, table: &mut SlotTable, sentence: &Sentence, gold: Option<&[usize]>) -> Result<CompiledSentence> {
        self.check_language(&sentence.language)?;
        let k = self.num_tags();
        let names = self.tagset.names();
        let bos = self.tagset.name(self.tagset.bos_index());
        let prev_name = |p: usize| if p == k { bos.as_str() } else { names[p].as_str() };
        let suffixes: Vec<String> = if self.conjoin_language {
            vec![String::new(), language_suffix(&sentence.language)]
        } else {
            vec![String::new()]
        };
        let n = sentence.len();
        let mut unigram = Vec::with_capacity(n);
        let mut transition = Vec::with_capacity(n);
        for i in 0..n {
            let mut uni = Vec::new();
            for attr in observation_attributes(sentence, i, &self.templates) {
                for suffix in &suffixes {
                    let key = format!("u\u{1f}{attr}\u{1f}{suffix}");
                    let slot = self.slot_for(table, key, || {
                        names.iter().map(|t| format!("{}{suffix}", tag_feature(&attr, t))).collect()
                    });
                    uni.extend(slot);
                }
            }
            let mut trans = Vec::new();
            for suffix in &suffixes {
                if self.templates.has(Template::TagBigram) {
                    let key = format!("b\u{1f}{suffix}");
                    let slot = self.slot_for(table, key, || {
                        (0..=k)
                            .flat_map(|p| names.iter().map(move |t| (p, t)))
                            .map(|(p, t)| format!("{}{suffix}", bigram_feature(prev_name(p), t)))
                            .collect()
                    });
                    trans.extend(slot);
                }
                if self.templates.has(Template::TagBigramWord) {
                    let word = &sentence.tokens[i];
                    let key = format!("w\u{1f}{word}\u{1f}{suffix}");
                    let slot = self.slot_for(table, key, || {
                        (0..=k)
                            .flat_map(|p| names.iter().map(move |t| (p, t)))
                            .map(|(p, t)| format!("{}{suffix}", bigram_word_feature(prev_name(p), t, word)))
                            .collect()
                    });
                    trans.extend(slot);
                }
            }
            unigram.push(uni);
            transition.push(trans);
        }
        if let Some(g) = gold {
            if let Some(&bad) = g.iter().find(|&&t| t >= k) {
                return Err(Error::InvalidTag { index: bad, size: k });
            }
        }
        Ok(CompiledSentence {
            n,
            unigram,
            transition,
            gold: gold.map(<[usize]>::to_vec),
        })
    }

    pub fn compile(&self, sentences: &[LabeledSentence]) -> Result<CompiledCorpus> {
        let mut slots = SlotTable::default();
        let compiled = sentences
            .iter()
            .map(|s| self.compile_into(&mut slots, &s.sentence, Some(&s.tags)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledCorpus {
            slots,
            sentences: compiled,
        })
    }

    pub fn compile_unlabeled(&self, sentences: &[Sentence]) -> Result<CompiledCorpus> {
        let mut slots = SlotTable::default();
        let compiled = sentences
            .iter()
            .map(|s| self.compile_into(&mut slots, s, None))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledCorpus {
            slots,
            sentences: compiled,
        })
    }

    pub fn lattice(&self, slots: &SlotTable, sent: &CompiledSentence) -> LogLattice {
        compiled_lattice(&self.weights, self.num_tags(), slots, sent)
    }

    pub fn predict(&self, sentences: &[Sentence]) -> Result<Vec<Vec<usize>>> {
        let compiled = self.compile_unlabeled(sentences)?;
        compiled
            .sentences
            .iter()
            .map(|s| crf::viterbi(&self.lattice(&compiled.slots, s)).map(|(tags, _)| tags))
            .collect()
    }

    /// Penalized conditional log-likelihood of `batch` and its gradient with
    /// respect to the weights.
    pub fn loglik_and_gradient(&self, batch: &[LabeledSentence]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        if !self.index.is_frozen() {
            return Err(Error::Config("feature index must be frozen".into()));
        }
        let compiled = self.compile(batch)?;
        loglik_compiled(&self.weights, self.num_tags(), self.l2, &compiled)
    }

    pub fn to_container(&self) -> Container {
        let meta = Meta {
            tagset: self.tagset.clone(),
            templates: self.templates.clone(),
            conjoin_language: self.conjoin_language,
            languages: self.languages.clone(),
            l2: self.l2,
        };
        let mut c = Container::new("loglinear");
        c.push("meta", Entry::Text(serde_json::to_string(&meta).expect("meta serializes")));
        c.push("features", Entry::Strings(self.index.names().to_vec()));
        c.push_tensor("weights", vec![self.weights.len()], self.weights.clone());
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != "loglinear" {
            return Err(Error::Format(format!("expected a loglinear model, found `{}`", c.kind)));
        }
        let meta: Meta = serde_json::from_str(c.text("meta")?).map_err(|e| Error::Format(e.to_string()))?;
        let index = FeatureIndex::from_names(c.strings("features")?.to_vec())?;
        let (_, weights) = c.tensor("weights")?;
        if weights.len() != index.len() {
            return Err(Error::Format("weight count does not match feature count".into()));
        }
        Ok(LogLinearModel {
            tagset: meta.tagset,
            templates: meta.templates,
            conjoin_language: meta.conjoin_language,
            languages: meta.languages,
            l2: meta.l2,
            index,
            weights: weights.to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

#[inline]
fn slot_sum(weights: &[f64], ids: &[u32], at: usize) -> f64 {
    match ids[at] {
        NONE => 0.0,
        id => weights[id as usize],
    }
}

fn compiled_lattice(weights: &[f64], k: usize, slots: &SlotTable, sent: &CompiledSentence) -> LogLattice {
    let mut lat = LogLattice::zeros(sent.n, k);
    let mut emit = vec![0.0; k];
    for i in 0..sent.n {
        emit.iter_mut().for_each(|v| *v = 0.0);
        for &s in &sent.unigram[i] {
            let ids = &slots.slots[s as usize];
            for (t, e) in emit.iter_mut().enumerate() {
                *e += slot_sum(weights, ids, t);
            }
        }
        if i == 0 {
            for t in 0..k {
                let trans: f64 = sent.transition[0]
                    .iter()
                    .map(|&s| slot_sum(weights, &slots.slots[s as usize], k * k + t))
                    .sum();
                lat.set(0, None, t, emit[t] + trans);
            }
        } else {
            let start = k + (i - 1) * k * k;
            let block = &mut lat.flat_mut()[start..start + k * k];
            for a in 0..k {
                block[a * k..(a + 1) * k].copy_from_slice(&emit);
            }
            for &s in &sent.transition[i] {
                let ids = &slots.slots[s as usize];
                for (j, b) in block.iter_mut().enumerate() {
                    *b += slot_sum(weights, ids, j);
                }
            }
        }
    }
    lat
}

/// Adds `scale * (observed - expected)` counts of one sentence into `grad`
/// and returns its log-likelihood.
fn sentence_loglik(
    weights: &[f64],
    k: usize,
    slots: &SlotTable,
    sent: &CompiledSentence,
    grad: &mut [f64],
) -> Result<f64> {
    let gold = sent
        .gold
        .as_ref()
        .ok_or_else(|| Error::Config("sentence has no gold tags".into()))?;
    let lat = compiled_lattice(weights, k, slots, sent);
    let post = crf::posteriors(&lat)?;
    let ll = lat.path_score(gold)? - post.log_z;

    let mut add = |ids: &[u32], at: usize, v: f64| {
        if ids[at] != NONE {
            grad[ids[at] as usize] += v;
        }
    };
    for i in 0..sent.n {
        for &s in &sent.unigram[i] {
            let ids = &slots.slots[s as usize];
            add(ids, gold[i], 1.0);
            for t in 0..k {
                add(ids, t, -post.node(i, t));
            }
        }
        for &s in &sent.transition[i] {
            let ids = &slots.slots[s as usize];
            if i == 0 {
                add(ids, k * k + gold[0], 1.0);
                for t in 0..k {
                    add(ids, k * k + t, -post.edge(0, None, t));
                }
            } else {
                add(ids, gold[i - 1] * k + gold[i], 1.0);
                let start = k + (i - 1) * k * k;
                for (j, m) in post.edge_marginals[start..start + k * k].iter().enumerate() {
                    add(ids, j, -m);
                }
            }
        }
    }
    Ok(ll)
}

/// `Σ log p(t | w) - l2/2 |η|²` and its gradient.
pub fn loglik_compiled(weights: &[f64], k: usize, l2: f64, corpus: &CompiledCorpus) -> Result<(f64, Vec<f64>)> {
    let (mut ll, mut grad) = ordered_chunk_sum(&corpus.sentences, weights.len(), |_, chunk, g| {
        let mut total = 0.0;
        for s in chunk {
            total += sentence_loglik(weights, k, &corpus.slots, s, g)?;
        }
        Ok(total)
    })?;
    if l2 > 0.0 {
        for (g, w) in grad.iter_mut().zip(weights) {
            *g -= l2 * w;
        }
        ll -= 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    }
    Ok((ll, grad))
}

#[derive(Debug, Clone)]
pub struct LogLinearTrainReport {
    pub iterations: usize,
    pub termination: Termination,
    pub grad_inf_norm: f64,
    /// Penalized log-likelihood after every accepted step.
    pub objective_trace: Vec<f64>,
}

/// Maximizes the penalized log-likelihood of `train` with L-BFGS, starting
/// from the model's current weights.
pub fn train_lbfgs(
    model: &LogLinearModel,
    train: &[LabeledSentence],
    config: &LogLinearTrainConfig,
) -> Result<(LogLinearModel, LogLinearTrainReport)> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let compiled = model.compile(train)?;
    let k = model.num_tags();
    let objective = |w: &[f64], g: &mut [f64]| -> Result<f64> {
        let (ll, grad) = loglik_compiled(w, k, config.l2, &compiled)?;
        for (gi, v) in g.iter_mut().zip(&grad) {
            *gi = -v;
        }
        Ok(-ll)
    };
    let cfg = LbfgsConfig {
        memory: config.memory,
        tol: config.tol,
        max_iter: config.max_iter,
        ..LbfgsConfig::default()
    };
    let res = lbfgs::minimize(objective, model.weights.clone(), &cfg)?;
    log::debug!(
        "lbfgs: {} iterations, {:?}, |g|inf = {:.3e}",
        res.iterations,
        res.termination,
        res.grad_inf_norm
    );
    let mut trained = model.clone();
    trained.weights = res.x;
    trained.l2 = config.l2;
    Ok((
        trained,
        LogLinearTrainReport {
            iterations: res.iterations,
            termination: res.termination,
            grad_inf_norm: res.grad_inf_norm,
            objective_trace: res.trace.iter().map(|v| -v).collect(),
        },
    ))
}
