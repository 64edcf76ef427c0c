//! Neural CRF potentials.
//!
//! Word vectors concatenate the final state of a character LSTM with a
//! language-specific word embedding. A stacked bidirectional LSTM reads the
//! word vectors and an affine map projects each concatenated state down to
//! `r2` dimensions, giving `s_i`. Two scorers turn `s_i` into lattice
//! scores:
//!
//! * [`ScorerKind::Mono`]: `a(t', t) + o(t)ᵀ W s_i`
//! * [`ScorerKind::Xling`]: `a(t', t) + uᵀ tanh(U [s_i; l(ℓ)] + b)`, with an
//!   optional per-tag term `o(t)ᵀ tanh(...)` when
//!   [`NeuralConfig::xling_tag_emissions`] is set.
//!
//! The character LSTM and the transitions `a` are single tensors used for
//! every language; word tables and language embeddings are per language.

pub mod adadelta;
pub mod gradcheck;
pub mod lstm;
pub mod params;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, Entry};
use crate::corpus::{LabeledSentence, Sentence, TagSet};
use crate::crf::{self, LogLattice};
use crate::error::{Error, Result};
use crate::parallel::ordered_chunk_sum;
use crate::rng::SplitMix64;

use lstm::{glorot, Lstm, LstmCache};
use params::{axpy, dot, matvec, matvec_add, matvec_t_add, outer_add, ParamStore, Tensor};

pub use adadelta::{AdaDelta, AdaDeltaConfig};
pub use gradcheck::{epsilon_sweep, grad_check, GradCheckOptions, GradCheckReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Tag embedding size.
    pub r1: usize,
    /// Sentence representation size.
    pub r2: usize,
    /// Language embedding size.
    pub r3: usize,
    /// Hidden size of the cross-lingual projection.
    pub q: usize,
    /// Character LSTM state size.
    pub d_char: usize,
    pub d_char_embed: usize,
    pub d_word: usize,
    pub lstm_layers: usize,
    /// Per direction.
    pub lstm_hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            r1: 100,
            r2: 100,
            r3: 16,
            q: 128,
            d_char: 50,
            d_char_embed: 25,
            d_word: 50,
            lstm_layers: 2,
            lstm_hidden: 100,
        }
    }
}

impl Dims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.r1,
            self.r2,
            self.r3,
            self.q,
            self.d_char,
            self.d_char_embed,
            self.d_word,
            self.lstm_layers,
            self.lstm_hidden,
        ];
        if all.contains(&0) {
            return Err(Error::Config(format!("all dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn word_dim(&self) -> usize {
        self.d_char + self.d_word
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Mono,
    Xling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub dims: Dims,
    pub scorer: ScorerKind,
    /// Adds `o(t)ᵀ tanh(U [s_i; l(ℓ)] + b)` to the cross-lingual emission so
    /// that it depends on the tag. Off reproduces the tag-independent form.
    pub xling_tag_emissions: bool,
    pub seed: u64,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            dims: Dims::default(),
            scorer: ScorerKind::Mono,
            xling_tag_emissions: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharEncoder {
    chars: Vec<char>,
    vocab: HashMap<char, usize>,
    pub embed: Tensor,
    pub lstm: Lstm,
}

impl CharEncoder {
    /// Row 0 is the unknown-character row.
    pub fn char_id(&self, c: char) -> usize {
        self.vocab.get(&c).copied().unwrap_or(0)
    }

    pub fn vocab_size(&self) -> usize {
        self.chars.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordTable {
    pub language: String,
    words: Vec<String>,
    vocab: HashMap<String, usize>,
    pub embed: Tensor,
}

impl WordTable {
    /// Row 0 is the unknown-word row.
    pub fn word_id(&self, w: &str) -> usize {
        self.vocab.get(w).copied().unwrap_or(0)
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEncoder {
    /// `(forward, backward)` per layer.
    pub layers: Vec<(Lstm, Lstm)>,
    pub proj: Tensor,
    pub proj_bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoScorer {
    pub tag_embed: Tensor,
    pub interaction: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XlingScorer {
    pub lang_embed: Tensor,
    pub proj: Tensor,
    pub u: Tensor,
    pub b: Tensor,
    pub tag_embed: Option<Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Mono(MonoScorer),
    Xling(XlingScorer),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub config: NeuralConfig,
    pub tagset: TagSet,
    pub languages: Vec<String>,
    pub char_encoder: CharEncoder,
    pub word_tables: Vec<WordTable>,
    pub sentence_encoder: SentenceEncoder,
    pub scorer: Scorer,
    /// `(k + 1) x k`; row `k` is the beginning-of-sentence context.
    pub transitions: Tensor,
    pub params: ParamStore,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: NeuralConfig,
    tagset: TagSet,
    languages: Vec<String>,
}

/// Intermediate values of one sentence's forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    n: usize,
    lang: usize,
    chars: Vec<(Vec<usize>, Vec<f64>, LstmCache)>,
    word_rows: Vec<usize>,
    omega: Vec<f64>,
    /// Per layer: input, forward cache, reversed input, backward cache.
    layers: Vec<(Vec<f64>, LstmCache, Vec<f64>, LstmCache)>,
    top: Vec<f64>,
    pub s: Vec<f64>,
    scorer_in: Vec<f64>,
    scorer_hidden: Vec<f64>,
    pub emissions: Vec<f64>,
}

impl NeuralModel {
    /// Builds the parameter layout for the given vocabularies and
    /// initializes it from `config.seed`.
    pub fn new(
        config: NeuralConfig,
        tagset: TagSet,
        languages: Vec<String>,
        chars: Vec<char>,
        words: Vec<Vec<String>>,
    ) -> Result<Self> {
        let mut model = Self::layout(config, tagset, languages, chars, words)?;
        model.initialize(config.seed);
        Ok(model)
    }

    /// Collects the character vocabulary and each language's word vocabulary
    /// from `sentences` (sorted, so the result does not depend on sentence
    /// order) and builds a model for `languages`.
    pub fn from_corpus(
        config: NeuralConfig,
        tagset: TagSet,
        languages: Vec<String>,
        sentences: &[&LabeledSentence],
    ) -> Result<Self> {
        let mut chars = BTreeSet::new();
        let mut words: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); languages.len()];
        for s in sentences {
            let li = languages
                .iter()
                .position(|l| l == s.language())
                .ok_or_else(|| Error::UnknownLanguage(s.language().to_string()))?;
            for tok in &s.sentence.tokens {
                chars.extend(tok.chars());
                words[li].insert(tok.as_str());
            }
        }
        let words = words
            .into_iter()
            .map(|set| set.into_iter().map(str::to_string).collect())
            .collect();
        Self::new(config, tagset, languages, chars.into_iter().collect(), words)
    }

    fn layout(
        config: NeuralConfig,
        tagset: TagSet,
        languages: Vec<String>,
        chars: Vec<char>,
        words: Vec<Vec<String>>,
    ) -> Result<Self> {
        let dims = config.dims;
        dims.validate()?;
        if languages.is_empty() {
            return Err(Error::Config("at least one language is required".into()));
        }
        if words.len() != languages.len() {
            return Err(Error::Config("one word vocabulary per language is required".into()));
        }
        let mut seen = BTreeSet::new();
        if !languages.iter().all(|l| seen.insert(l)) {
            return Err(Error::Config("duplicate language".into()));
        }
        let k = tagset.len();
        let mut store = ParamStore::default();

        let char_vocab: HashMap<char, usize> = chars.iter().enumerate().map(|(i, &c)| (c, i + 1)).collect();
        let char_embed = store.alloc("char.embed", "char_embed", chars.len() + 1, dims.d_char_embed);
        let char_lstm = Lstm::alloc(&mut store, "char.lstm", "char_lstm", dims.d_char_embed, dims.d_char);
        let char_encoder = CharEncoder {
            chars,
            vocab: char_vocab,
            embed: char_embed,
            lstm: char_lstm,
        };

        let word_tables = languages
            .iter()
            .zip(words)
            .map(|(lang, words)| {
                let vocab = words.iter().enumerate().map(|(i, w)| (w.clone(), i + 1)).collect();
                let embed = store.alloc(format!("word.{lang}"), "word_tables", words.len() + 1, dims.d_word);
                WordTable {
                    language: lang.clone(),
                    words,
                    vocab,
                    embed,
                }
            })
            .collect();

        let h = dims.lstm_hidden;
        let layers = (0..dims.lstm_layers)
            .map(|l| {
                let input = if l == 0 { dims.word_dim() } else { 2 * h };
                (
                    Lstm::alloc(&mut store, &format!("bilstm.{l}.fwd"), "bilstm", input, h),
                    Lstm::alloc(&mut store, &format!("bilstm.{l}.bwd"), "bilstm", input, h),
                )
            })
            .collect();
        let sentence_encoder = SentenceEncoder {
            layers,
            proj: store.alloc("sent.proj", "bilstm", dims.r2, 2 * h),
            proj_bias: store.alloc("sent.proj_bias", "bilstm", dims.r2, 1),
        };

        let scorer = match config.scorer {
            ScorerKind::Mono => Scorer::Mono(MonoScorer {
                tag_embed: store.alloc("mono.tag_embed", "tag_embed", k, dims.r1),
                interaction: store.alloc("mono.W", "W", dims.r1, dims.r2),
            }),
            ScorerKind::Xling => Scorer::Xling(XlingScorer {
                lang_embed: store.alloc("xling.lang_embed", "lang_embed", languages.len(), dims.r3),
                proj: store.alloc("xling.U", "U", dims.q, dims.r2 + dims.r3),
                u: store.alloc("xling.u", "u", dims.q, 1),
                b: store.alloc("xling.b", "b", dims.q, 1),
                tag_embed: config
                    .xling_tag_emissions
                    .then(|| store.alloc("xling.tag_embed", "tag_embed", k, dims.q)),
            }),
        };
        let transitions = store.alloc("transitions", "transitions", k + 1, k);

        Ok(NeuralModel {
            config,
            tagset,
            languages,
            char_encoder,
            word_tables,
            sentence_encoder,
            scorer,
            transitions,
            params: store,
        })
    }

    /// Embeddings uniform in ±0.1, LSTMs per [`Lstm::init`], dense maps
    /// Glorot-uniform, biases and transitions zero. Tensors are visited in
    /// registration order from one [`SplitMix64`] stream.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        let dims = self.config.dims;
        let values = &mut self.params.values;
        values.iter_mut().for_each(|v| *v = 0.0);
        let embed = |t: &Tensor, values: &mut [f64], rng: &mut SplitMix64| {
            for v in t.slice_mut(values) {
                *v = rng.uniform(-0.1, 0.1);
            }
        };
        embed(&self.char_encoder.embed, values, &mut rng);
        self.char_encoder.lstm.init(values, &mut rng);
        for table in &self.word_tables {
            embed(&table.embed, values, &mut rng);
        }
        for (f, b) in &self.sentence_encoder.layers {
            f.init(values, &mut rng);
            b.init(values, &mut rng);
        }
        let proj = self.sentence_encoder.proj;
        glorot(proj.slice_mut(values), proj.cols, proj.rows, &mut rng);
        match &self.scorer {
            Scorer::Mono(m) => {
                embed(&m.tag_embed, values, &mut rng);
                glorot(m.interaction.slice_mut(values), dims.r2, dims.r1, &mut rng);
            }
            Scorer::Xling(x) => {
                embed(&x.lang_embed, values, &mut rng);
                glorot(x.proj.slice_mut(values), dims.r2 + dims.r3, dims.q, &mut rng);
                glorot(x.u.slice_mut(values), dims.q, 1, &mut rng);
                if let Some(t) = &x.tag_embed {
                    embed(t, values, &mut rng);
                }
            }
        }
    }

    pub fn num_tags(&self) -> usize {
        self.tagset.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn language_index(&self, language: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|l| l == language)
            .ok_or_else(|| Error::UnknownLanguage(language.to_string()))
    }

    /// The character encoder used for `language`. There is one per model.
    pub fn char_encoder_for(&self, language: &str) -> Result<&CharEncoder> {
        self.language_index(language)?;
        Ok(&self.char_encoder)
    }

    /// The transition tensor used for `language`. There is one per model.
    pub fn transitions_for(&self, language: &str) -> Result<&Tensor> {
        self.language_index(language)?;
        Ok(&self.transitions)
    }

    fn char_forward(&self, word: &str) -> (Vec<usize>, Vec<f64>, LstmCache) {
        let enc = &self.char_encoder;
        let d = self.config.dims.d_char_embed;
        let ids: Vec<usize> = word.chars().map(|c| enc.char_id(c)).collect();
        let mut embedded = Vec::with_capacity(ids.len() * d);
        for &id in &ids {
            embedded.extend_from_slice(enc.embed.row(&self.params.values, id));
        }
        let cache = enc.lstm.forward(&self.params.values, &embedded);
        (ids, embedded, cache)
    }

    /// `[char-LSTM final state; word embedding]` for `word` in `language`.
    pub fn encode_word(&self, word: &str, language: &str) -> Result<Vec<f64>> {
        if word.is_empty() {
            return Err(Error::Config("empty word".into()));
        }
        let li = self.language_index(language)?;
        let (_, _, cache) = self.char_forward(word);
        let table = &self.word_tables[li];
        let mut out = cache.last(self.config.dims.d_char).to_vec();
        out.extend_from_slice(table.embed.row(&self.params.values, table.word_id(word)));
        Ok(out)
    }

    /// Runs everything up to and including the emission scores.
    pub fn forward(&self, sentence: &Sentence) -> Result<Forward> {
        let dims = self.config.dims;
        let p = &self.params.values;
        let n = sentence.len();
        if n == 0 {
            return Err(Error::Config("empty sentence".into()));
        }
        let lang = self.language_index(&sentence.language)?;
        let table = &self.word_tables[lang];
        let wd = dims.word_dim();

        let mut chars = Vec::with_capacity(n);
        let mut word_rows = Vec::with_capacity(n);
        let mut omega = vec![0.0; n * wd];
        for (i, tok) in sentence.tokens.iter().enumerate() {
            let cf = self.char_forward(tok);
            let row = table.word_id(tok);
            omega[i * wd..i * wd + dims.d_char].copy_from_slice(cf.2.last(dims.d_char));
            omega[i * wd + dims.d_char..(i + 1) * wd].copy_from_slice(table.embed.row(p, row));
            chars.push(cf);
            word_rows.push(row);
        }

        let h = dims.lstm_hidden;
        let mut layers = Vec::with_capacity(dims.lstm_layers);
        let mut input = omega.clone();
        for (fwd, bwd) in &self.sentence_encoder.layers {
            let width = fwd.input;
            let reversed = reverse_rows(&input, width);
            let fc = fwd.forward(p, &input);
            let bc = bwd.forward(p, &reversed);
            let mut out = vec![0.0; n * 2 * h];
            for i in 0..n {
                out[i * 2 * h..i * 2 * h + h].copy_from_slice(fc.output(i, h));
                out[i * 2 * h + h..(i + 1) * 2 * h].copy_from_slice(bc.output(n - 1 - i, h));
            }
            layers.push((input, fc, reversed, bc));
            input = out;
        }
        let top = input;

        let enc = &self.sentence_encoder;
        let mut s = vec![0.0; n * dims.r2];
        for i in 0..n {
            let row = &mut s[i * dims.r2..(i + 1) * dims.r2];
            row.copy_from_slice(enc.proj_bias.slice(p));
            matvec_add(enc.proj.slice(p), 2 * h, &top[i * 2 * h..(i + 1) * 2 * h], row);
        }

        let k = self.num_tags();
        let mut emissions = vec![0.0; n * k];
        let mut scorer_in = Vec::new();
        let mut scorer_hidden = Vec::new();
        match &self.scorer {
            Scorer::Mono(m) => {
                let mut v = vec![0.0; dims.r1];
                for i in 0..n {
                    matvec(m.interaction.slice(p), dims.r2, &s[i * dims.r2..(i + 1) * dims.r2], &mut v);
                    for t in 0..k {
                        emissions[i * k + t] = dot(m.tag_embed.row(p, t), &v);
                    }
                    scorer_hidden.extend_from_slice(&v);
                }
            }
            Scorer::Xling(x) => {
                let width = dims.r2 + dims.r3;
                scorer_in = vec![0.0; n * width];
                scorer_hidden = vec![0.0; n * dims.q];
                let l = x.lang_embed.row(p, lang);
                for i in 0..n {
                    let xin = &mut scorer_in[i * width..(i + 1) * width];
                    xin[..dims.r2].copy_from_slice(&s[i * dims.r2..(i + 1) * dims.r2]);
                    xin[dims.r2..].copy_from_slice(l);
                    let hid = &mut scorer_hidden[i * dims.q..(i + 1) * dims.q];
                    hid.copy_from_slice(x.b.slice(p));
                    matvec_add(x.proj.slice(p), width, xin, hid);
                    hid.iter_mut().for_each(|v| *v = v.tanh());
                    let shared = dot(x.u.slice(p), hid);
                    for t in 0..k {
                        let tag_term = x.tag_embed.map_or(0.0, |te| dot(te.row(p, t), hid));
                        emissions[i * k + t] = shared + tag_term;
                    }
                }
            }
        }

        Ok(Forward {
            n,
            lang,
            chars,
            word_rows,
            omega,
            layers,
            top,
            s,
            scorer_in,
            scorer_hidden,
            emissions,
        })
    }

    /// Rows `s(w)_i` of the sentence representation.
    pub fn encode_sentence(&self, sentence: &Sentence) -> Result<Vec<Vec<f64>>> {
        let f = self.forward(sentence)?;
        Ok(f.s.chunks(self.config.dims.r2).map(<[f64]>::to_vec).collect())
    }

    fn lattice_from_forward(&self, f: &Forward) -> LogLattice {
        let k = self.num_tags();
        let a = self.transitions.slice(&self.params.values);
        LogLattice::from_fn(f.n, k, |i, prev, t| {
            let row = prev.unwrap_or(k);
            a[row * k + t] + f.emissions[i * k + t]
        })
    }

    /// Lattice of whichever scorer the model carries.
    pub fn lattice(&self, sentence: &Sentence) -> Result<LogLattice> {
        Ok(self.lattice_from_forward(&self.forward(sentence)?))
    }

    pub fn mono_lattice(&self, sentence: &Sentence) -> Result<LogLattice> {
        if !matches!(self.scorer, Scorer::Mono(_)) {
            return Err(Error::Config("model does not carry a monolingual scorer".into()));
        }
        self.lattice(sentence)
    }

    /// Lattice for `sentence` scored as `language`.
    pub fn xling_lattice(&self, sentence: &Sentence, language: &str) -> Result<LogLattice> {
        if !matches!(self.scorer, Scorer::Xling(_)) {
            return Err(Error::Config("model does not carry a cross-lingual scorer".into()));
        }
        self.language_index(language)?;
        let s = Sentence {
            tokens: sentence.tokens.clone(),
            language: language.to_string(),
        };
        self.lattice(&s)
    }

    pub fn predict(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        Ok(crf::viterbi(&self.lattice(sentence)?)?.0)
    }

    pub fn predict_all(&self, sentences: &[Sentence]) -> Result<Vec<Vec<usize>>> {
        sentences.iter().map(|s| self.predict(s)).collect()
    }

    /// `-weight * log p(gold | w)` for one sentence, accumulating its
    /// gradient into `grad`.
    pub fn sentence_loss(&self, example: &LabeledSentence, weight: f64, grad: &mut [f64]) -> Result<f64> {
        let f = self.forward(&example.sentence)?;
        let lat = self.lattice_from_forward(&f);
        let post = crf::posteriors(&lat)?;
        let gold_score = lat.path_score(&example.tags)?;
        let loss = weight * (post.log_z - gold_score);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        if weight == 0.0 {
            return Ok(loss);
        }
        let k = self.num_tags();
        let n = f.n;

        // dLoss/dscore = weight * (marginal - gold indicator).
        let mut d_emit = vec![0.0; n * k];
        let d_trans = self.transitions.slice_mut(grad);
        for i in 0..n {
            for t in 0..k {
                d_emit[i * k + t] = weight * post.node(i, t);
            }
            d_emit[i * k + example.tags[i]] -= weight;
        }
        for t in 0..k {
            d_trans[k * k + t] += weight * post.edge(0, None, t);
        }
        d_trans[k * k + example.tags[0]] -= weight;
        for i in 1..n {
            let start = k + (i - 1) * k * k;
            for (j, m) in post.edge_marginals[start..start + k * k].iter().enumerate() {
                d_trans[j] += weight * m;
            }
            d_trans[example.tags[i - 1] * k + example.tags[i]] -= weight;
        }

        self.backward(&f, &d_emit, grad);
        Ok(loss)
    }

    /// Backpropagates emission gradients (`n x k`) to every parameter.
    fn backward(&self, f: &Forward, d_emit: &[f64], grad: &mut [f64]) {
        let dims = self.config.dims;
        let p = &self.params.values;
        let (n, k) = (f.n, self.num_tags());

        let mut ds = vec![0.0; n * dims.r2];
        match &self.scorer {
            Scorer::Mono(m) => {
                let mut dv = vec![0.0; dims.r1];
                for i in 0..n {
                    let v = &f.scorer_hidden[i * dims.r1..(i + 1) * dims.r1];
                    dv.iter_mut().for_each(|x| *x = 0.0);
                    for t in 0..k {
                        let g = d_emit[i * k + t];
                        if g != 0.0 {
                            axpy(g, v, m.tag_embed.row_mut(grad, t));
                            axpy(g, m.tag_embed.row(p, t), &mut dv);
                        }
                    }
                    let s_i = &f.s[i * dims.r2..(i + 1) * dims.r2];
                    outer_add(m.interaction.slice_mut(grad), &dv, s_i);
                    matvec_t_add(m.interaction.slice(p), dims.r2, &dv, &mut ds[i * dims.r2..(i + 1) * dims.r2]);
                }
            }
            Scorer::Xling(x) => {
                let width = dims.r2 + dims.r3;
                let mut dh = vec![0.0; dims.q];
                let mut dxin = vec![0.0; width];
                for i in 0..n {
                    let hid = &f.scorer_hidden[i * dims.q..(i + 1) * dims.q];
                    let total: f64 = d_emit[i * k..(i + 1) * k].iter().sum();
                    axpy(total, hid, x.u.slice_mut(grad));
                    dh.iter_mut().zip(x.u.slice(p)).for_each(|(d, u)| *d = total * u);
                    if let Some(te) = &x.tag_embed {
                        for t in 0..k {
                            let g = d_emit[i * k + t];
                            if g != 0.0 {
                                axpy(g, hid, te.row_mut(grad, t));
                                axpy(g, te.row(p, t), &mut dh);
                            }
                        }
                    }
                    for (d, hv) in dh.iter_mut().zip(hid) {
                        *d *= 1.0 - hv * hv;
                    }
                    let xin = &f.scorer_in[i * width..(i + 1) * width];
                    outer_add(x.proj.slice_mut(grad), &dh, xin);
                    axpy(1.0, &dh, x.b.slice_mut(grad));
                    dxin.iter_mut().for_each(|v| *v = 0.0);
                    matvec_t_add(x.proj.slice(p), width, &dh, &mut dxin);
                    axpy(1.0, &dxin[..dims.r2], &mut ds[i * dims.r2..(i + 1) * dims.r2]);
                    axpy(1.0, &dxin[dims.r2..], x.lang_embed.row_mut(grad, f.lang));
                }
            }
        }

        let h = dims.lstm_hidden;
        let enc = &self.sentence_encoder;
        let mut d_top = vec![0.0; n * 2 * h];
        for i in 0..n {
            let d = &ds[i * dims.r2..(i + 1) * dims.r2];
            outer_add(enc.proj.slice_mut(grad), d, &f.top[i * 2 * h..(i + 1) * 2 * h]);
            axpy(1.0, d, enc.proj_bias.slice_mut(grad));
            matvec_t_add(enc.proj.slice(p), 2 * h, d, &mut d_top[i * 2 * h..(i + 1) * 2 * h]);
        }

        for ((fwd, bwd), (input, fc, reversed, bc)) in enc.layers.iter().zip(&f.layers).rev() {
            let width = fwd.input;
            let mut d_f = vec![0.0; n * h];
            let mut d_b = vec![0.0; n * h];
            for i in 0..n {
                d_f[i * h..(i + 1) * h].copy_from_slice(&d_top[i * 2 * h..i * 2 * h + h]);
                d_b[(n - 1 - i) * h..(n - i) * h].copy_from_slice(&d_top[i * 2 * h + h..(i + 1) * 2 * h]);
            }
            let mut d_in = vec![0.0; n * width];
            let mut d_in_rev = vec![0.0; n * width];
            fwd.backward(p, input, fc, &d_f, grad, &mut d_in);
            bwd.backward(p, reversed, bc, &d_b, grad, &mut d_in_rev);
            for i in 0..n {
                axpy(
                    1.0,
                    &d_in_rev[(n - 1 - i) * width..(n - i) * width],
                    &mut d_in[i * width..(i + 1) * width],
                );
            }
            d_top = d_in;
        }
        let d_omega = d_top;

        let wd = dims.word_dim();
        let table = &self.word_tables[f.lang];
        let enc_c = &self.char_encoder;
        let dc = dims.d_char;
        let de = dims.d_char_embed;
        for i in 0..n {
            let d = &d_omega[i * wd..(i + 1) * wd];
            axpy(1.0, &d[dc..], table.embed.row_mut(grad, f.word_rows[i]));
            let (ids, embedded, cache) = &f.chars[i];
            let steps = ids.len();
            let mut d_h = vec![0.0; steps * dc];
            d_h[(steps - 1) * dc..].copy_from_slice(&d[..dc]);
            let mut d_emb = vec![0.0; steps * de];
            enc_c.lstm.backward(p, embedded, cache, &d_h, grad, &mut d_emb);
            for (j, &id) in ids.iter().enumerate() {
                axpy(1.0, &d_emb[j * de..(j + 1) * de], enc_c.embed.row_mut(grad, id));
            }
        }
        let _ = &f.omega;
    }

    /// Weighted negative log-likelihood of `batch` and its gradient.
    pub fn weighted_loss_and_gradients(&self, batch: &[(&LabeledSentence, f64)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        ordered_chunk_sum(batch, self.num_params(), |offset, chunk, g| {
            let mut total = 0.0;
            for (j, (ex, w)) in chunk.iter().enumerate() {
                total += self.sentence_loss(ex, *w, g).map_err(|e| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!("sentence {}: {msg}", offset + j)),
                    other => other,
                })?;
            }
            Ok(total)
        })
    }

    /// `-Σ log p(t | w, ℓ)` over `batch` and its gradient.
    pub fn loss_and_gradients(&self, batch: &[LabeledSentence]) -> Result<(f64, Vec<f64>)> {
        let weighted: Vec<(&LabeledSentence, f64)> = batch.iter().map(|s| (s, 1.0)).collect();
        self.weighted_loss_and_gradients(&weighted)
    }

    pub fn loss(&self, batch: &[LabeledSentence]) -> Result<f64> {
        let mut sink = vec![0.0; self.num_params()];
        let mut total = 0.0;
        for ex in batch {
            total += self.sentence_loss(ex, 1.0, &mut sink)?;
        }
        Ok(total)
    }

    pub fn to_container(&self) -> Container {
        let header = Header {
            config: self.config,
            tagset: self.tagset.clone(),
            languages: self.languages.clone(),
        };
        let mut c = Container::new("neural");
        c.push("header", Entry::Text(serde_json::to_string(&header).expect("header serializes")));
        c.push(
            "chars",
            Entry::Strings(self.char_encoder.chars.iter().map(|c| c.to_string()).collect()),
        );
        for table in &self.word_tables {
            c.push(format!("words.{}", table.language), Entry::Strings(table.words.clone()));
        }
        for info in &self.params.infos {
            c.push_tensor(
                format!("param.{}", info.name),
                vec![info.tensor.rows, info.tensor.cols],
                info.tensor.slice(&self.params.values).to_vec(),
            );
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.kind != "neural" {
            return Err(Error::Format(format!("expected a neural model, found `{}`", c.kind)));
        }
        let header: Header = serde_json::from_str(c.text("header")?).map_err(|e| Error::Format(e.to_string()))?;
        let chars = c
            .strings("chars")?
            .iter()
            .map(|s| {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(ch), None) => Ok(ch),
                    _ => Err(Error::Format(format!("bad character entry {s:?}"))),
                }
            })
            .collect::<Result<Vec<char>>>()?;
        let words = header
            .languages
            .iter()
            .map(|l| c.strings(&format!("words.{l}")).map(<[String]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        let mut model = Self::layout(header.config, header.tagset, header.languages, chars, words)?;
        for info in model.params.infos.clone() {
            let (shape, data) = c.tensor(&format!("param.{}", info.name))?;
            if shape != [info.tensor.rows, info.tensor.cols] {
                return Err(Error::Format(format!("shape mismatch for `{}`", info.name)));
            }
            info.tensor.slice_mut(&mut model.params.values).copy_from_slice(data);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

fn reverse_rows(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(width).rev() {
        out.extend_from_slice(row);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config(scorer: ScorerKind) -> NeuralConfig {
        NeuralConfig {
            dims: Dims {
                r1: 5,
                r2: 6,
                r3: 3,
                q: 7,
                d_char: 4,
                d_char_embed: 3,
                d_word: 4,
                lstm_layers: 2,
                lstm_hidden: 5,
            },
            scorer,
            xling_tag_emissions: false,
            seed: 3,
        }
    }

    fn ls(words: &[&str], tags: &[usize], lang: &str) -> LabeledSentence {
        LabeledSentence {
            sentence: Sentence::new(words.iter().map(|w| w.to_string()).collect(), lang).unwrap(),
            tags: tags.to_vec(),
        }
    }

    fn model(scorer: ScorerKind) -> (NeuralModel, Vec<LabeledSentence>) {
        let data = vec![
            ls(&["Ana", "vive", "en", "Lugo"], &[1, 0, 0, 3], "gl"),
            ls(&["Juan", "come"], &[1, 0], "es"),
        ];
        let refs: Vec<&LabeledSentence> = data.iter().collect();
        let m = NeuralModel::from_corpus(
            small_config(scorer),
            TagSet::default(),
            vec!["gl".into(), "es".into()],
            &refs,
        )
        .unwrap();
        (m, data)
    }

    #[test]
    fn word_vector_shape_and_sharing() {
        let (m, _) = model(ScorerKind::Xling);
        let a = m.encode_word("Lugo", "gl").unwrap();
        let b = m.encode_word("Lugo", "es").unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a[..4], b[..4]);
        assert_ne!(a[4..], b[4..]);
        assert!(m.encode_word("x", "fr").is_err());
        assert!(std::ptr::eq(
            m.char_encoder_for("gl").unwrap(),
            m.char_encoder_for("es").unwrap()
        ));
    }

    #[test]
    fn default_dims_word_vector() {
        assert_eq!(Dims::default().word_dim(), 100);
    }

    #[test]
    fn zero_scorer_gives_uniform_loss() {
        let (mut m, _) = model(ScorerKind::Mono);
        let Scorer::Mono(mono) = &m.scorer else { unreachable!() };
        let w = mono.interaction;
        w.slice_mut(&mut m.params.values).iter_mut().for_each(|v| *v = 0.0);
        let ex = ls(&["Ana"], &[1], "gl");
        let (loss, _) = m.loss_and_gradients(&[ex]).unwrap();
        assert!((loss - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicate_doubles() {
        let (m, data) = model(ScorerKind::Xling);
        let (l1, g1) = m.loss_and_gradients(&data[..1]).unwrap();
        let (l2, g2) = m.loss_and_gradients(&[data[0].clone(), data[0].clone()]).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn save_load_identical() {
        for kind in [ScorerKind::Mono, ScorerKind::Xling] {
            let (m, data) = model(kind);
            let back = NeuralModel::from_container(&Container::from_bytes(&m.to_container().to_bytes()).unwrap())
                .unwrap();
            assert_eq!(back, m);
            assert_eq!(back.loss(&data).unwrap().to_bits(), m.loss(&data).unwrap().to_bits());
        }
    }

    #[test]
    fn wrong_scorer_kind() {
        let (m, data) = model(ScorerKind::Mono);
        assert!(m.xling_lattice(&data[0].sentence, "gl").is_err());
        let (x, data) = model(ScorerKind::Xling);
        assert!(x.mono_lattice(&data[0].sentence).is_err());
        assert!(matches!(
            x.xling_lattice(&data[0].sentence, "fr"),
            Err(Error::UnknownLanguage(_))
        ));
    }
}
