//! BIO-tagged corpora: tag inventory, CoNLL-style reading and writing,
//! span extraction, language registry and seeded train/dev/test splits.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_ENTITY_TYPES: [&str; 4] = ["per", "loc", "org", "misc"];

/// Ordered tag inventory `O, B-x1, I-x1, B-x2, I-x2, ...`.
///
/// `O` is always index 0. Index `len()` is reserved for the
/// beginning-of-sentence context and is never a real tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSet {
    entity_types: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind {
    Outside,
    Begin(usize),
    Inside(usize),
}

impl Default for TagSet {
    fn default() -> Self {
        TagSet::new(DEFAULT_ENTITY_TYPES.iter().map(|s| s.to_string())).unwrap()
    }
}

impl TagSet {
    pub const OUTSIDE: usize = 0;

    pub fn new<I: IntoIterator<Item = String>>(entity_types: I) -> Result<Self> {
        let entity_types: Vec<String> = entity_types
            .into_iter()
            .map(|t| t.to_ascii_lowercase())
            .collect();
        let mut seen = HashSet::new();
        for t in &entity_types {
            if t.is_empty() || t.contains(char::is_whitespace) || t.contains('-') {
                return Err(Error::Config(format!("invalid entity type `{t}`")));
            }
            if !seen.insert(t.as_str()) {
                return Err(Error::Config(format!("duplicate entity type `{t}`")));
            }
        }
        Ok(TagSet { entity_types })
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn len(&self) -> usize {
        1 + 2 * self.entity_types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bos_index(&self) -> usize {
        self.len()
    }

    pub fn begin(&self, entity: usize) -> usize {
        1 + 2 * entity
    }

    pub fn inside(&self, entity: usize) -> usize {
        2 + 2 * entity
    }

    pub fn kind(&self, tag: usize) -> TagKind {
        match tag {
            0 => TagKind::Outside,
            t if t % 2 == 1 => TagKind::Begin((t - 1) / 2),
            t => TagKind::Inside((t - 2) / 2),
        }
    }

    pub fn name(&self, tag: usize) -> String {
        if tag == self.bos_index() {
            return "BOS".to_string();
        }
        match self.kind(tag) {
            TagKind::Outside => "O".to_string(),
            TagKind::Begin(e) => format!("B-{}", self.entity_types[e].to_ascii_uppercase()),
            TagKind::Inside(e) => format!("I-{}", self.entity_types[e].to_ascii_uppercase()),
        }
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.len()).map(|t| self.name(t)).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        if name == "O" {
            return Some(Self::OUTSIDE);
        }
        let (prefix, ty) = name.split_once('-')?;
        let ty = ty.to_ascii_lowercase();
        let e = self.entity_types.iter().position(|t| *t == ty)?;
        match prefix {
            "B" => Some(self.begin(e)),
            "I" => Some(self.inside(e)),
            _ => None,
        }
    }

    /// Whether `tag` may follow `prev` (`None` = sentence start).
    pub fn is_valid_transition(&self, prev: Option<usize>, tag: usize) -> bool {
        match self.kind(tag) {
            TagKind::Inside(e) => match prev.map(|p| self.kind(p)) {
                Some(TagKind::Begin(p)) | Some(TagKind::Inside(p)) => p == e,
                _ => false,
            },
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub language: String,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, language: impl Into<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Config("sentence must have at least one token".into()));
        }
        if let Some(t) = tokens.iter().find(|t| t.is_empty() || t.contains(char::is_whitespace)) {
            return Err(Error::Config(format!("invalid token {t:?}")));
        }
        Ok(Sentence {
            tokens,
            language: language.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub tags: Vec<usize>,
}

impl LabeledSentence {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn language(&self) -> &str {
        &self.sentence.language
    }
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub sentences: Vec<LabeledSentence>,
    pub repairs: usize,
}

/// Rewrites every `I-x` with an invalid left context to `B-x`.
/// Returns the number of rewritten positions.
pub fn repair_bio(tags: &mut [usize], tagset: &TagSet) -> usize {
    let mut repairs = 0;
    let mut prev = None;
    for tag in tags.iter_mut() {
        if !tagset.is_valid_transition(prev, *tag) {
            if let TagKind::Inside(e) = tagset.kind(*tag) {
                *tag = tagset.begin(e);
                repairs += 1;
            }
        }
        prev = Some(*tag);
    }
    repairs
}

pub fn check_bio(tags: &[usize], tagset: &TagSet) -> Result<()> {
    let mut prev = None;
    for (position, &tag) in tags.iter().enumerate() {
        if tag >= tagset.len() {
            return Err(Error::InvalidTag {
                index: tag,
                size: tagset.len(),
            });
        }
        if !tagset.is_valid_transition(prev, tag) {
            return Err(Error::Bio {
                position,
                msg: format!(
                    "{} cannot follow {}",
                    tagset.name(tag),
                    prev.map_or("sentence start".to_string(), |p| tagset.name(p))
                ),
            });
        }
        prev = Some(tag);
    }
    Ok(())
}

fn split_line(line: &str) -> Vec<&str> {
    line.split([' ', '\t']).filter(|s| !s.is_empty()).collect()
}

/// Reads `token<WS>tag` lines with blank-line sentence breaks.
pub fn parse_conll(text: &str, language: &str, tagset: &TagSet) -> Result<ParsedCorpus> {
    let mut sentences = Vec::new();
    let mut repairs = 0;
    let mut tokens = Vec::new();
    let mut tags = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<usize>| {
        if tokens.is_empty() {
            return;
        }
        repairs += repair_bio(tags, tagset);
        sentences.push(LabeledSentence {
            sentence: Sentence {
                tokens: std::mem::take(tokens),
                language: language.to_string(),
            },
            tags: std::mem::take(tags),
        });
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut tags);
            continue;
        }
        let fields = split_line(line);
        match fields.as_slice() {
            [token, tag] => {
                let idx = tagset.index_of(tag).ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("unknown tag `{tag}`"),
                })?;
                tokens.push(token.to_string());
                tags.push(idx);
            }
            [_] => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "missing tag column".into(),
                })
            }
            _ => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!(
                        "expected `token tag`, found {} fields (tokens may not contain whitespace)",
                        fields.len()
                    ),
                })
            }
        }
    }
    flush(&mut tokens, &mut tags);
    Ok(ParsedCorpus { sentences, repairs })
}

/// Reads tokens for tagging; a second (tag) column is accepted and ignored.
pub fn parse_tokens(text: &str, language: &str) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !tokens.is_empty() {
                sentences.push(Sentence {
                    tokens: std::mem::take(&mut tokens),
                    language: language.to_string(),
                });
            }
            continue;
        }
        let fields = split_line(line);
        if fields.len() > 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: format!("expected at most 2 fields, found {}", fields.len()),
            });
        }
        tokens.push(fields[0].to_string());
    }
    if !tokens.is_empty() {
        sentences.push(Sentence {
            tokens,
            language: language.to_string(),
        });
    }
    Ok(sentences)
}

/// Normalized two-column form: single space separator, blank line between
/// sentences, trailing newline.
pub fn serialize_conll(sentences: &[LabeledSentence], tagset: &TagSet) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        for (tok, &tag) in s.sentence.tokens.iter().zip(&s.tags) {
            let _ = writeln!(out, "{} {}", tok, tagset.name(tag));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity: usize,
}

/// Maximal `B-x I-x*` runs as half-open spans.
pub fn bio_spans(tags: &[usize], tagset: &TagSet) -> Result<Vec<Span>> {
    check_bio(tags, tagset)?;
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tagset.kind(tag) {
            TagKind::Outside => {
                spans.extend(open.take());
            }
            TagKind::Begin(e) => {
                spans.extend(open.take());
                open = Some(Span {
                    start: i,
                    end: i + 1,
                    entity: e,
                });
            }
            TagKind::Inside(_) => {
                if let Some(s) = open.as_mut() {
                    s.end = i + 1;
                }
            }
        }
    }
    spans.extend(open);
    Ok(spans)
}

/// Inverse of [`bio_spans`] for sorted, non-overlapping spans.
pub fn tags_from_spans(n: usize, spans: &[Span], tagset: &TagSet) -> Result<Vec<usize>> {
    let mut tags = vec![TagSet::OUTSIDE; n];
    let mut last_end = 0;
    for s in spans {
        if s.start >= s.end || s.end > n || s.start < last_end || s.entity >= tagset.entity_types().len()
        {
            return Err(Error::Config(format!("invalid span {s:?} for length {n}")));
        }
        tags[s.start] = tagset.begin(s.entity);
        for t in &mut tags[s.start + 1..s.end] {
            *t = tagset.inside(s.entity);
        }
        last_end = s.end;
    }
    Ok(tags)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Language {
    pub code: String,
    pub name: String,
    pub family: String,
    pub branch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageRegistry {
    entries: Vec<Language>,
}

impl Default for LanguageRegistry {
    /// The fifteen languages of the transfer experiments.
    fn default() -> Self {
        let rows = [
            ("Galician", "gl", "Indo-European", "Romance"),
            ("Catalan", "ca", "Indo-European", "Romance"),
            ("French", "fr", "Indo-European", "Romance"),
            ("Italian", "it", "Indo-European", "Romance"),
            ("Romanian", "ro", "Indo-European", "Romance"),
            ("Spanish", "es", "Indo-European", "Romance"),
            ("West Frisian", "fy", "Indo-European", "Germanic"),
            ("Dutch", "nl", "Indo-European", "Germanic"),
            ("Tagalog", "tl", "Austronesian", "Philippine"),
            ("Cebuano", "ceb", "Austronesian", "Philippine"),
            ("Ukrainian", "uk", "Indo-European", "Slavic"),
            ("Russian", "ru", "Indo-European", "Slavic"),
            ("Marathi", "mr", "Indo-European", "Indo-Aryan"),
            ("Hindi", "hi", "Indo-European", "Indo-Aryan"),
            ("Urdu", "ur", "Indo-European", "Indo-Aryan"),
        ];
        let mut reg = LanguageRegistry::empty();
        for (name, code, family, branch) in rows {
            reg.register(Language {
                code: code.into(),
                name: name.into(),
                family: family.into(),
                branch: branch.into(),
            })
            .unwrap();
        }
        reg
    }
}

impl LanguageRegistry {
    pub fn empty() -> Self {
        LanguageRegistry { entries: Vec::new() }
    }

    pub fn register(&mut self, lang: Language) -> Result<()> {
        if self.get(&lang.code).is_some() {
            return Err(Error::Config(format!("duplicate language code `{}`", lang.code)));
        }
        self.entries.push(lang);
        Ok(())
    }

    /// Registers `code` with placeholder metadata unless already present.
    pub fn ensure(&mut self, code: &str) {
        if self.get(code).is_none() {
            self.entries.push(Language {
                code: code.into(),
                name: code.into(),
                family: "unknown".into(),
                branch: "unknown".into(),
            });
        }
    }

    pub fn get(&self, code: &str) -> Option<&Language> {
        self.entries.iter().find(|l| l.code == code)
    }

    pub fn entries(&self) -> &[Language] {
        &self.entries
    }

    pub fn check(&self, sentences: &[LabeledSentence]) -> Result<()> {
        for s in sentences {
            if self.get(s.language()).is_none() {
                return Err(Error::UnknownLanguage(s.language().to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<LabeledSentence>,
    pub dev: Vec<LabeledSentence>,
    pub test: Vec<LabeledSentence>,
}

/// Shuffles sentence indices with [`SplitMix64`] seeded by `spec.seed` and
/// cuts the permutation as `dev | test | train`.
///
/// Because train comes last, a smaller train split under the same seed (and
/// the same dev/test sizes) is a prefix of a larger one, and dev/test are
/// unchanged.
pub fn make_splits(corpus: &[LabeledSentence], spec: &SplitSpec) -> Result<Splits> {
    if spec.train_size == 0 || spec.dev_size == 0 || spec.test_size == 0 {
        return Err(Error::Config("split sizes must be positive".into()));
    }
    let required = spec.train_size + spec.dev_size + spec.test_size;
    if required > corpus.len() {
        return Err(Error::InsufficientData {
            required,
            available: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    SplitMix64::new(spec.seed).shuffle(&mut order);
    let take = |range: std::ops::Range<usize>| -> Vec<LabeledSentence> {
        order[range].iter().map(|&i| corpus[i].clone()).collect()
    };
    let dev_end = spec.dev_size;
    let test_end = dev_end + spec.test_size;
    Ok(Splits {
        dev: take(0..dev_end),
        test: take(dev_end..test_end),
        train: take(test_end..test_end + spec.train_size),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Source,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub language: String,
    pub role: Role,
}

/// `path<TAB>language<TAB>role` per line; `#` comments and blank lines are
/// skipped. Relative paths resolve against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [path, language, role] = fields.as_slice() else {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "expected `path<TAB>language<TAB>role`".into(),
            });
        };
        let role = match *role {
            "target" => Role::Target,
            "source" => Role::Source,
            other => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("role must be `target` or `source`, found `{other}`"),
                })
            }
        };
        let path = Path::new(path);
        let path = if path.is_absolute() {
            path.to_path_buf()
        } else {
            base_dir.join(path)
        };
        entries.push(ManifestEntry {
            path,
            language: language.to_string(),
            role,
        });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(ts: &TagSet, names: &[&str]) -> Vec<usize> {
        names.iter().map(|n| ts.index_of(n).unwrap()).collect()
    }

    #[test]
    fn default_tagset_has_nine_tags() {
        let ts = TagSet::default();
        assert_eq!(ts.len(), 9);
        assert_eq!(ts.index_of("O"), Some(0));
        assert_eq!(ts.bos_index(), 9);
        let names = ts.names();
        for (i, n) in names.iter().enumerate() {
            assert_eq!(ts.index_of(n), Some(i));
        }
    }

    #[test]
    fn parse_simple() {
        let ts = TagSet::default();
        let parsed = parse_conll("U.N. B-ORG\nofficial O\nEkeus B-PER\n", "en", &ts).unwrap();
        assert_eq!(parsed.sentences.len(), 1);
        assert_eq!(parsed.sentences[0].tags, tags(&ts, &["B-ORG", "O", "B-PER"]));
        assert_eq!(parsed.repairs, 0);
    }

    #[test]
    fn parse_repairs_orphan_inside() {
        let ts = TagSet::default();
        let parsed = parse_conll("a I-LOC\n", "en", &ts).unwrap();
        assert_eq!(parsed.sentences[0].tags, tags(&ts, &["B-LOC"]));
        assert_eq!(parsed.repairs, 1);
    }

    #[test]
    fn parse_repairs_type_switch() {
        let ts = TagSet::default();
        let parsed = parse_conll("a B-PER\nb I-LOC\nc I-LOC\n", "en", &ts).unwrap();
        assert_eq!(parsed.sentences[0].tags, tags(&ts, &["B-PER", "B-LOC", "I-LOC"]));
        assert_eq!(parsed.repairs, 1);
    }

    #[test]
    fn parse_errors() {
        let ts = TagSet::default();
        match parse_conll("a O\nb B-FOO\n", "en", &ts) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_conll("New York B-LOC\n", "en", &ts),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_conll("", "en", &ts).unwrap().sentences.is_empty());
        assert!(parse_conll("\n\n", "en", &ts).unwrap().sentences.is_empty());
    }

    #[test]
    fn parse_tabs_and_multiple_blank_lines() {
        let ts = TagSet::default();
        let parsed = parse_conll("a\tO\n\n\n\nb\tB-PER\r\n", "en", &ts).unwrap();
        assert_eq!(parsed.sentences.len(), 2);
        assert_eq!(
            serialize_conll(&parsed.sentences, &ts),
            "a O\n\nb B-PER\n"
        );
    }

    #[test]
    fn spans_examples() {
        let ts = TagSet::default();
        let per = 0;
        let loc = 1;
        assert_eq!(
            bio_spans(&tags(&ts, &["B-PER", "I-PER", "O"]), &ts).unwrap(),
            vec![Span { start: 0, end: 2, entity: per }]
        );
        assert!(bio_spans(&tags(&ts, &["O", "O", "O"]), &ts).unwrap().is_empty());
        assert_eq!(
            bio_spans(&tags(&ts, &["B-LOC", "B-LOC", "I-LOC"]), &ts).unwrap(),
            vec![
                Span { start: 0, end: 1, entity: loc },
                Span { start: 1, end: 3, entity: loc }
            ]
        );
        assert!(matches!(
            bio_spans(&tags(&ts, &["O", "I-PER"]), &ts),
            Err(Error::Bio { position: 1, .. })
        ));
    }

    /// Independent span reader: scans for B tags and extends over matching I tags.
    fn span_oracle(names: &[String]) -> Vec<(usize, usize, String)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < names.len() {
            if let Some(ty) = names[i].strip_prefix("B-") {
                let mut j = i + 1;
                while j < names.len() && names[j] == format!("I-{ty}") {
                    j += 1;
                }
                out.push((i, j, ty.to_ascii_lowercase()));
                i = j;
            } else {
                i += 1;
            }
        }
        out
    }

    #[test]
    fn spans_match_oracle_on_all_length_three_sequences() {
        let ts = TagSet::default();
        let k = ts.len();
        let mut checked = 0;
        for code in 0..k * k * k {
            let seq = vec![code / (k * k), (code / k) % k, code % k];
            if check_bio(&seq, &ts).is_err() {
                assert!(bio_spans(&seq, &ts).is_err());
                continue;
            }
            let names: Vec<String> = seq.iter().map(|&t| ts.name(t)).collect();
            let got: Vec<(usize, usize, String)> = bio_spans(&seq, &ts)
                .unwrap()
                .into_iter()
                .map(|s| (s.start, s.end, ts.entity_types()[s.entity].clone()))
                .collect();
            assert_eq!(got, span_oracle(&names), "{names:?}");
            assert_eq!(tags_from_spans(3, &bio_spans(&seq, &ts).unwrap(), &ts).unwrap(), seq);
            checked += 1;
        }
        assert!(checked > 100);
    }

    fn corpus(n: usize) -> Vec<LabeledSentence> {
        (0..n)
            .map(|i| LabeledSentence {
                sentence: Sentence {
                    tokens: vec![format!("w{i}")],
                    language: "xx".into(),
                },
                tags: vec![0],
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let c = corpus(12000);
        let spec = SplitSpec { train_size: 10000, dev_size: 1000, test_size: 1000, seed: 7 };
        let s = make_splits(&c, &spec).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (10000, 1000, 1000));
        let mut all = HashSet::new();
        for x in s.train.iter().chain(&s.dev).chain(&s.test) {
            assert!(all.insert(x.sentence.tokens[0].clone()));
        }
    }

    #[test]
    fn split_prefix_property() {
        let c = corpus(12000);
        let big = make_splits(
            &c,
            &SplitSpec { train_size: 10000, dev_size: 1000, test_size: 1000, seed: 7 },
        )
        .unwrap();
        let small = make_splits(
            &c,
            &SplitSpec { train_size: 100, dev_size: 1000, test_size: 1000, seed: 7 },
        )
        .unwrap();
        assert_eq!(small.train[..], big.train[..100]);
        assert_eq!(small.dev, big.dev);
        assert_eq!(small.test, big.test);
    }

    #[test]
    fn split_seed_behaviour() {
        let c = corpus(500);
        let spec = |seed| SplitSpec { train_size: 100, dev_size: 50, test_size: 50, seed };
        assert_eq!(make_splits(&c, &spec(1)).unwrap(), make_splits(&c, &spec(1)).unwrap());
        let base: HashSet<_> = make_splits(&c, &spec(0))
            .unwrap()
            .train
            .into_iter()
            .map(|s| s.sentence.tokens[0].clone())
            .collect();
        for seed in 1..=20 {
            let other: HashSet<_> = make_splits(&c, &spec(seed))
                .unwrap()
                .train
                .into_iter()
                .map(|s| s.sentence.tokens[0].clone())
                .collect();
            assert_ne!(base, other, "seed {seed}");
        }
    }

    #[test]
    fn split_too_small() {
        let c = corpus(10);
        let err = make_splits(&c, &SplitSpec { train_size: 8, dev_size: 2, test_size: 2, seed: 0 })
            .unwrap_err();
        assert!(matches!(err, Error::InsufficientData { required: 12, available: 10 }));
    }

    #[test]
    fn manifest_parsing() {
        let m = "# corpora\ngl.txt\tgl\ttarget\n/abs/es.txt\tes\tsource\n";
        let entries = parse_manifest(m, Path::new("/data")).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].path, PathBuf::from("/data/gl.txt"));
        assert_eq!(entries[0].role, Role::Target);
        assert_eq!(entries[1].path, PathBuf::from("/abs/es.txt"));
        assert!(parse_manifest("a\tgl\tboth\n", Path::new(".")).is_err());
    }

    #[test]
    fn registry() {
        let reg = LanguageRegistry::default();
        assert_eq!(reg.entries().len(), 15);
        assert_eq!(reg.get("ceb").unwrap().branch, "Philippine");
        let mut reg = reg;
        assert!(reg
            .register(Language { code: "gl".into(), name: "x".into(), family: "x".into(), branch: "x".into() })
            .is_err());
    }
}
