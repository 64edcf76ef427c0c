//! Synthetic BIO corpora for controlled transfer experiments.
//!
//! Every language draws its stems from its own consonant inventory, so two
//! languages never share a word. What they do share is morphology:
//!
//! * Entity tokens end in a type suffix from one inventory common to all
//!   languages. Most suffixes name a single type.
//! * Some entities carry an *ambiguous* suffix whose type depends on the
//!   sentence's class.
//! * The class is announced by the sentence-initial cue word, itself marked
//!   by a shared class suffix, and entities always start at least
//!   [`MIN_CUE_DISTANCE`] tokens after it. A ±2 token window therefore
//!   cannot see the cue, while a sentence-level encoder can.
//!
//! Entity tokens are capitalized; a small share of filler tokens are too.

use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledSentence, Sentence, TagSet};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Entities start no closer than this to the cue word.
pub const MIN_CUE_DISTANCE: usize = 3;

/// Unambiguous suffixes per entity type (per, loc, org, misc).
const TYPE_SUFFIXES: [&[&str]; 4] = [
    &["ovic", "sson"],
    &["burg", "stad"],
    &["corp", "tech"],
    &["ism", "fest"],
];

/// Ambiguous suffixes: `(suffix, type in class 0, type in class 1)`.
const AMBIGUOUS_SUFFIXES: [(&str, usize, usize); 2] = [("ana", 0, 2), ("ello", 1, 3)];

const CLASS_SUFFIXES: [&str; 2] = ["uq", "yx"];

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLanguage {
    pub code: String,
    /// Consonants used for this language's stems. Languages meant to have
    /// disjoint vocabularies need disjoint inventories.
    pub consonants: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub filler_vocab: usize,
    pub entity_stems: usize,
    pub cues_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that an entity uses an ambiguous suffix.
    pub ambiguous_rate: f64,
    /// Probability that an entity spans two tokens.
    pub two_token_rate: f64,
    /// Probability that a filler token is capitalized.
    pub capitalized_filler_rate: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            filler_vocab: 300,
            entity_stems: 3000,
            cues_per_class: 8,
            min_len: 7,
            max_len: 14,
            ambiguous_rate: 0.5,
            two_token_rate: 0.3,
            capitalized_filler_rate: 0.05,
        }
    }
}

/// A language's lexicon, fixed by its seed.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub code: String,
    fillers: Vec<String>,
    stems: Vec<String>,
    cues: [Vec<String>; 2],
    params: SynthParams,
}

fn capitalize(w: &str) -> String {
    let mut cs = w.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

fn stem(consonants: &[char], syllables: usize, rng: &mut SplitMix64) -> String {
    let mut s = String::new();
    for _ in 0..syllables {
        s.push(consonants[rng.below(consonants.len())]);
        s.push(VOWELS[rng.below(VOWELS.len())]);
    }
    s
}

/// `count` distinct stems of 1 to 3 syllables.
fn distinct_stems(consonants: &[char], count: usize, min_syl: usize, rng: &mut SplitMix64) -> Result<Vec<String>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 100 * count + 1000 {
            return Err(Error::Config(format!(
                "cannot draw {count} distinct stems from {} consonants",
                consonants.len()
            )));
        }
        let s = stem(consonants, min_syl + rng.below(2), rng);
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    Ok(out)
}

impl Lexicon {
    pub fn new(lang: &SynthLanguage, params: SynthParams) -> Result<Self> {
        let consonants: Vec<char> = lang.consonants.chars().collect();
        if consonants.is_empty() || consonants.iter().any(|c| VOWELS.contains(c)) {
            return Err(Error::Config(format!("bad consonant inventory `{}`", lang.consonants)));
        }
        if params.min_len < MIN_CUE_DISTANCE + 2 || params.max_len < params.min_len {
            return Err(Error::Config("sentence lengths too short for the cue distance".into()));
        }
        let mut rng = SplitMix64::new(lang.seed);
        let fillers = distinct_stems(&consonants, params.filler_vocab, 1, &mut rng)?;
        let mut stems = distinct_stems(&consonants, params.entity_stems + 2 * params.cues_per_class, 2, &mut rng)?;
        let cue_stems = stems.split_off(params.entity_stems);
        let cues = [
            cue_stems[..params.cues_per_class]
                .iter()
                .map(|s| format!("{s}{}", CLASS_SUFFIXES[0]))
                .collect(),
            cue_stems[params.cues_per_class..]
                .iter()
                .map(|s| format!("{s}{}", CLASS_SUFFIXES[1]))
                .collect(),
        ];
        Ok(Lexicon {
            code: lang.code.clone(),
            fillers,
            stems,
            cues,
            params,
        })
    }

    /// Zipf-like filler choice: index `⌊V^u⌋ − 1` for uniform `u`.
    fn filler(&self, rng: &mut SplitMix64) -> String {
        let v = self.fillers.len() as f64;
        let idx = ((v.powf(rng.unit())) as usize).saturating_sub(1).min(self.fillers.len() - 1);
        let w = &self.fillers[idx];
        if rng.unit() < self.params.capitalized_filler_rate {
            capitalize(w)
        } else {
            w.clone()
        }
    }

    fn entity_token(&self, suffix: &str, rng: &mut SplitMix64) -> String {
        capitalize(&format!("{}{suffix}", self.stems[rng.below(self.stems.len())]))
    }

    pub fn sentence(&self, tagset: &TagSet, rng: &mut SplitMix64) -> LabeledSentence {
        let p = &self.params;
        let len = p.min_len + rng.below(p.max_len - p.min_len + 1);
        let class = rng.below(2);
        let mut tokens = vec![capitalize(&self.cues[class][rng.below(self.cues[class].len())])];
        let mut tags = vec![0];
        while tokens.len() < MIN_CUE_DISTANCE {
            tokens.push(self.filler(rng));
            tags.push(0);
        }
        let n_entities = 1 + rng.below(3);
        let mut placed = 0;
        while tokens.len() < len {
            let room = len - tokens.len();
            let want_entity = placed < n_entities && rng.below(room.max(1)) < (n_entities - placed) * 2;
            if !want_entity {
                tokens.push(self.filler(rng));
                tags.push(0);
                continue;
            }
            let (suffix, entity) = if rng.unit() < p.ambiguous_rate {
                let (s, a, b) = AMBIGUOUS_SUFFIXES[rng.below(AMBIGUOUS_SUFFIXES.len())];
                (s, if class == 0 { a } else { b })
            } else {
                let e = rng.below(TYPE_SUFFIXES.len());
                (TYPE_SUFFIXES[e][rng.below(TYPE_SUFFIXES[e].len())], e)
            };
            tokens.push(self.entity_token(suffix, rng));
            tags.push(tagset.begin(entity));
            if room > 1 && rng.unit() < p.two_token_rate {
                tokens.push(self.entity_token(suffix, rng));
                tags.push(tagset.inside(entity));
            }
            placed += 1;
            // Keep adjacent entities apart.
            if tokens.len() < len {
                tokens.push(self.filler(rng));
                tags.push(0);
            }
        }
        LabeledSentence {
            sentence: Sentence {
                tokens,
                language: self.code.clone(),
            },
            tags,
        }
    }

    pub fn corpus(&self, n: usize, tagset: &TagSet, seed: u64) -> Vec<LabeledSentence> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| self.sentence(tagset, &mut rng)).collect()
    }
}

/// Default four-type tagset check: the generator emits per/loc/org/misc
/// indices, so the tagset needs at least four entity types.
pub fn check_tagset(tagset: &TagSet) -> Result<()> {
    if tagset.entity_types().len() < TYPE_SUFFIXES.len() {
        return Err(Error::Config("synthetic corpora need four entity types".into()));
    }
    Ok(())
}

/// The two-language pair used for transfer experiments: target `xt`, source
/// `xs`.
pub fn transfer_pair(seed: u64) -> (SynthLanguage, SynthLanguage) {
    (
        SynthLanguage {
            code: "xt".into(),
            consonants: "bdfgklm".into(),
            seed: seed.wrapping_mul(2).wrapping_add(1),
        },
        SynthLanguage {
            code: "xs".into(),
            consonants: "hjnprsvz".into(),
            seed: seed.wrapping_mul(2).wrapping_add(2),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{bio_spans, check_bio};

    #[test]
    fn sentences_are_valid_and_cue_is_far() {
        let ts = TagSet::default();
        let (t, _) = transfer_pair(1);
        let lex = Lexicon::new(&t, SynthParams::default()).unwrap();
        for s in lex.corpus(500, &ts, 3) {
            check_bio(&s.tags, &ts).unwrap();
            assert_eq!(s.tags.len(), s.sentence.tokens.len());
            assert!(s.tags[..MIN_CUE_DISTANCE].iter().all(|&t| t == 0));
            assert!(!bio_spans(&s.tags, &ts).unwrap().is_empty());
            assert!(s.sentence.tokens.len() <= 14);
        }
    }

    #[test]
    fn vocabularies_are_disjoint() {
        let ts = TagSet::default();
        let (t, s) = transfer_pair(7);
        let a = Lexicon::new(&t, SynthParams::default()).unwrap().corpus(300, &ts, 1);
        let b = Lexicon::new(&s, SynthParams::default()).unwrap().corpus(300, &ts, 1);
        let words = |c: &[LabeledSentence]| -> std::collections::HashSet<String> {
            c.iter().flat_map(|s| s.sentence.tokens.iter().map(|w| w.to_lowercase())).collect()
        };
        assert!(words(&a).is_disjoint(&words(&b)));
    }

    #[test]
    fn deterministic() {
        let ts = TagSet::default();
        let (t, _) = transfer_pair(2);
        let lex = Lexicon::new(&t, SynthParams::default()).unwrap();
        assert_eq!(lex.corpus(50, &ts, 9), lex.corpus(50, &ts, 9));
        assert_ne!(lex.corpus(50, &ts, 9), lex.corpus(50, &ts, 10));
    }

    #[test]
    fn ambiguous_suffix_type_follows_class() {
        let ts = TagSet::default();
        let (t, _) = transfer_pair(4);
        let lex = Lexicon::new(&t, SynthParams::default()).unwrap();
        for s in lex.corpus(300, &ts, 5) {
            let class = if s.sentence.tokens[0].ends_with(CLASS_SUFFIXES[0]) { 0 } else { 1 };
            for (tok, &tag) in s.sentence.tokens.iter().zip(&s.tags) {
                if tag != 0 && tok.ends_with("ana") {
                    let want = if class == 0 { 0 } else { 2 };
                    assert!(tag == ts.begin(want) || tag == ts.inside(want));
                }
            }
        }
    }
}
