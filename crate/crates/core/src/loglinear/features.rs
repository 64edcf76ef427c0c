//! Feature templates for the log-linear CRF.
//!
//! Observation attributes are computed once per position and then conjoined
//! with the current tag (`attr|t=TAG`). Two transition templates depend on
//! the previous tag as well: the tag bigram (`bigram|tp=PREV|t=TAG`) and the
//! tag bigram conjoined with the current word (`...|w0=WORD`).

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, TagSet};

pub const BOS: &str = "<BOS>";
pub const EOS: &str = "<EOS>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Template {
    /// Word identity at every offset in `-window..=window`.
    WordWindow,
    Prefix,
    Suffix,
    Shape,
    ContainsDigit,
    ContainsHyphen,
    AllCaps,
    InitialCap,
    TagBigram,
    TagBigramWord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTemplateSet {
    pub templates: Vec<Template>,
    pub window: usize,
    pub affix_max: usize,
}

impl Default for FeatureTemplateSet {
    fn default() -> Self {
        FeatureTemplateSet {
            templates: vec![
                Template::WordWindow,
                Template::Prefix,
                Template::Suffix,
                Template::Shape,
                Template::ContainsDigit,
                Template::ContainsHyphen,
                Template::AllCaps,
                Template::InitialCap,
                Template::TagBigram,
                Template::TagBigramWord,
            ],
            window: 2,
            affix_max: 4,
        }
    }
}

impl FeatureTemplateSet {
    pub fn has(&self, t: Template) -> bool {
        self.templates.contains(&t)
    }
}

/// Character classes: upper `X`, lower `x`, digit `d`; everything else is
/// kept verbatim.
pub fn word_shape(word: &str) -> String {
    word.chars()
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_numeric() {
                'd'
            } else {
                c
            }
        })
        .collect()
}

fn offset_name(offset: isize) -> String {
    match offset {
        0 => "w0".to_string(),
        o if o > 0 => format!("w+{o}"),
        o => format!("w{o}"),
    }
}

/// Tag-independent attributes of position `i` (0-based).
pub fn observation_attributes(sentence: &Sentence, i: usize, templates: &FeatureTemplateSet) -> Vec<String> {
    let tokens = &sentence.tokens;
    let word = tokens[i].as_str();
    let mut out = Vec::with_capacity(24);

    if templates.has(Template::WordWindow) {
        let w = templates.window as isize;
        for offset in -w..=w {
            let j = i as isize + offset;
            let form = if j < 0 {
                BOS
            } else if j as usize >= tokens.len() {
                EOS
            } else {
                tokens[j as usize].as_str()
            };
            out.push(format!("{}={}", offset_name(offset), form));
        }
    }

    let chars: Vec<char> = word.chars().collect();
    if templates.has(Template::Prefix) {
        for len in 1..=templates.affix_max.min(chars.len()) {
            out.push(format!("pre{len}={}", chars[..len].iter().collect::<String>()));
        }
    }
    if templates.has(Template::Suffix) {
        for len in 1..=templates.affix_max.min(chars.len()) {
            out.push(format!(
                "suf{len}={}",
                chars[chars.len() - len..].iter().collect::<String>()
            ));
        }
    }
    if templates.has(Template::Shape) {
        out.push(format!("shape={}", word_shape(word)));
    }
    if templates.has(Template::ContainsDigit) && chars.iter().any(|c| c.is_numeric()) {
        out.push("has_digit".to_string());
    }
    if templates.has(Template::ContainsHyphen) && chars.contains(&'-') {
        out.push("has_hyphen".to_string());
    }
    let letters = chars.iter().filter(|c| c.is_alphabetic());
    if templates.has(Template::AllCaps)
        && chars.iter().any(|c| c.is_alphabetic())
        && letters.clone().all(|c| c.is_uppercase())
    {
        out.push("all_caps".to_string());
    }
    if templates.has(Template::InitialCap) && chars.first().is_some_and(|c| c.is_uppercase()) {
        out.push("init_cap".to_string());
    }
    out
}

pub fn tag_feature(attr: &str, tag: &str) -> String {
    format!("{attr}|t={tag}")
}

pub fn bigram_feature(prev: &str, tag: &str) -> String {
    format!("bigram|tp={prev}|t={tag}")
}

pub fn bigram_word_feature(prev: &str, tag: &str, word: &str) -> String {
    format!("bigram|tp={prev}|t={tag}|w0={word}")
}

/// All features firing at position `i` (0-based) for the transition
/// `prev -> tag`. `prev` is the tag set's BOS index at position 0.
pub fn extract_features(
    sentence: &Sentence,
    i: usize,
    prev: usize,
    tag: usize,
    tagset: &TagSet,
    templates: &FeatureTemplateSet,
) -> Vec<String> {
    let tag_name = tagset.name(tag);
    let prev_name = tagset.name(prev);
    let mut out: Vec<String> = observation_attributes(sentence, i, templates)
        .iter()
        .map(|a| tag_feature(a, &tag_name))
        .collect();
    if templates.has(Template::TagBigram) {
        out.push(bigram_feature(&prev_name, &tag_name));
    }
    if templates.has(Template::TagBigramWord) {
        out.push(bigram_word_feature(&prev_name, &tag_name, &sentence.tokens[i]));
    }
    out
}

pub fn language_suffix(language: &str) -> String {
    format!("|lang={language}")
}

/// The input features followed by a language-conjoined copy of each.
pub fn conjoin_language(features: &[String], language: &str) -> Vec<String> {
    let suffix = language_suffix(language);
    let mut out = Vec::with_capacity(2 * features.len());
    out.extend(features.iter().cloned());
    out.extend(features.iter().map(|f| format!("{f}{suffix}")));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sent(words: &[&str]) -> Sentence {
        Sentence::new(words.iter().map(|s| s.to_string()).collect(), "en").unwrap()
    }

    #[test]
    fn single_word_features() {
        let ts = TagSet::default();
        let s = sent(&["Paris"]);
        let loc = ts.index_of("B-LOC").unwrap();
        let f = extract_features(&s, 0, ts.bos_index(), loc, &ts, &FeatureTemplateSet::default());
        for expected in [
            "w0=Paris|t=B-LOC",
            "suf3=ris|t=B-LOC",
            "shape=Xxxxx|t=B-LOC",
            "bigram|tp=BOS|t=B-LOC",
            "w-1=<BOS>|t=B-LOC",
            "w+1=<EOS>|t=B-LOC",
            "init_cap|t=B-LOC",
        ] {
            assert!(f.contains(&expected.to_string()), "missing {expected} in {f:?}");
        }
        assert!(!f.iter().any(|x| x.starts_with("all_caps")));
    }

    #[test]
    fn affixes_respect_length() {
        let s = sent(&["ab"]);
        let attrs = observation_attributes(&s, 0, &FeatureTemplateSet::default());
        assert!(attrs.contains(&"pre2=ab".to_string()));
        assert!(!attrs.iter().any(|a| a.starts_with("pre3")));
    }

    #[test]
    fn shapes_and_flags() {
        assert_eq!(word_shape("U.N.-2"), "X.X.-d");
        let s = sent(&["IBM-3"]);
        let attrs = observation_attributes(&s, 0, &FeatureTemplateSet::default());
        for a in ["has_digit", "has_hyphen", "all_caps", "init_cap"] {
            assert!(attrs.contains(&a.to_string()), "{a}");
        }
    }

    #[test]
    fn conjoin_examples() {
        let f = vec!["w0=Paris|t=B-LOC".to_string()];
        assert_eq!(
            conjoin_language(&f, "gl"),
            vec!["w0=Paris|t=B-LOC".to_string(), "w0=Paris|t=B-LOC|lang=gl".to_string()]
        );
        assert!(conjoin_language(&[], "gl").is_empty());
    }

    proptest! {
        #[test]
        fn extraction_is_deterministic(words in prop::collection::vec("[A-Za-z0-9-]{1,8}", 1..6), pos in 0usize..6, t in 0usize..9, p in 0usize..10) {
            let s = Sentence::new(words.clone(), "xx").unwrap();
            let i = pos % words.len();
            let ts = TagSet::default();
            let tpl = FeatureTemplateSet::default();
            prop_assert_eq!(extract_features(&s, i, p, t, &ts, &tpl), extract_features(&s, i, p, t, &ts, &tpl));
        }

        #[test]
        fn conjoin_doubles_and_strips(features in prop::collection::vec("[a-z=|0-9]{0,12}", 0..20), lang in "[a-z]{2,3}") {
            let out = conjoin_language(&features, &lang);
            prop_assert_eq!(out.len(), 2 * features.len());
            prop_assert_eq!(&out[..features.len()], &features[..]);
            let suffix = language_suffix(&lang);
            let stripped: Vec<String> = out[features.len()..]
                .iter()
                .map(|f| f.strip_suffix(&suffix).unwrap().to_string())
                .collect();
            prop_assert_eq!(stripped, features);
        }
    }
}
