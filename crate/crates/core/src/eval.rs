//! Exact-span entity scoring and baseline-vs-system delta tables.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{bio_spans, repair_bio, LabeledSentence, TagSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub pred: usize,
    pub correct: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.pred)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Harmonic mean with `0/0 -> 0`.
pub fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub pred_count: usize,
    pub correct: usize,
}

/// Micro-averaged scores in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    pub per_type: BTreeMap<String, TypeScore>,
    pub token_accuracy: f64,
}

/// Scores `pred` against `gold`. Predictions are BIO-repaired first; a
/// predicted span is correct iff its start, end and type all match a gold
/// span.
pub fn entity_f1(gold: &[LabeledSentence], pred: &[Vec<usize>], tagset: &TagSet) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} gold sentences but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let types = tagset.entity_types();
    let mut per_type = vec![Counts::default(); types.len()];
    let mut tokens = 0usize;
    let mut tokens_correct = 0usize;

    for (idx, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.tags.len() != p.len() {
            return Err(Error::Shape(format!(
                "sentence {idx}: gold has {} tags, prediction has {}",
                g.tags.len(),
                p.len()
            )));
        }
        let mut gold_tags = g.tags.clone();
        repair_bio(&mut gold_tags, tagset);
        let mut pred_tags = p.clone();
        repair_bio(&mut pred_tags, tagset);

        tokens += gold_tags.len();
        tokens_correct += gold_tags.iter().zip(&pred_tags).filter(|(a, b)| a == b).count();

        let gs = bio_spans(&gold_tags, tagset)?;
        let ps = bio_spans(&pred_tags, tagset)?;
        let gset: HashSet<_> = gs.iter().collect();
        for s in &gs {
            per_type[s.entity].gold += 1;
        }
        for s in &ps {
            per_type[s.entity].pred += 1;
            if gset.contains(s) {
                per_type[s.entity].correct += 1;
            }
        }
    }

    let total = per_type.iter().fold(Counts::default(), |acc, c| Counts {
        gold: acc.gold + c.gold,
        pred: acc.pred + c.pred,
        correct: acc.correct + c.correct,
    });
    let per_type = types
        .iter()
        .zip(&per_type)
        .map(|(name, c)| {
            (
                name.clone(),
                TypeScore {
                    precision: c.precision(),
                    recall: c.recall(),
                    f1: c.f1(),
                    gold_count: c.gold,
                    pred_count: c.pred,
                    correct: c.correct,
                },
            )
        })
        .collect();

    Ok(EvalReport {
        precision: total.precision(),
        recall: total.recall(),
        f1: total.f1(),
        counts: total,
        per_type,
        token_accuracy: ratio(tokens_correct, tokens),
    })
}

/// Half-up (away from zero) rounding to two decimals. A tolerance of 1e-9
/// absorbs binary representation error such as `1.005 -> 1.00499...`.
pub fn round2(x: f64) -> f64 {
    let scaled = (x.abs() * 100.0 + 0.5 + 1e-9).floor() / 100.0;
    if x < 0.0 && scaled != 0.0 {
        -scaled
    } else {
        scaled
    }
}

pub fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

pub fn fmt_signed(x: f64) -> String {
    let r = round2(x);
    if r < 0.0 {
        format!("-{:.2}", -r)
    } else {
        format!("+{r:.2}")
    }
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>9} {:>9} {:>9} {:>6} {:>6} {:>8}",
            "type", "precision", "recall", "F1", "gold", "pred", "correct"
        );
        for (name, s) in &self.per_type {
            let _ = writeln!(
                out,
                "{:<8} {:>9} {:>9} {:>9} {:>6} {:>6} {:>8}",
                name,
                fmt2(s.precision),
                fmt2(s.recall),
                fmt2(s.f1),
                s.gold_count,
                s.pred_count,
                s.correct
            );
        }
        let _ = writeln!(
            out,
            "{:<8} {:>9} {:>9} {:>9} {:>6} {:>6} {:>8}",
            "overall",
            fmt2(self.precision),
            fmt2(self.recall),
            fmt2(self.f1),
            self.counts.gold,
            self.counts.pred,
            self.counts.correct
        );
        let _ = writeln!(out, "token accuracy: {}", fmt2(self.token_accuracy));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub target: String,
    pub source: Option<String>,
    pub baseline_f1: f64,
    pub system_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub target: String,
    pub source: Option<String>,
    pub baseline_f1: f64,
    pub system_f1: f64,
    pub delta: f64,
    /// Two-decimal signed rendering, e.g. `+4.94`.
    pub delta_display: String,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTable {
    pub records: Vec<DeltaRecord>,
}

/// `delta = system - baseline` per row.
pub fn delta_table(rows: &[DeltaRow]) -> DeltaTable {
    let records = rows
        .iter()
        .map(|r| {
            let delta = r.system_f1 - r.baseline_f1;
            DeltaRecord {
                target: r.target.clone(),
                source: r.source.clone(),
                baseline_f1: r.baseline_f1,
                system_f1: r.system_f1,
                delta,
                delta_display: fmt_signed(delta),
                positive: round2(delta) > 0.0,
            }
        })
        .collect();
    DeltaTable { records }
}

impl DeltaTable {
    /// Aligned plain text. The last column marks positive deltas with `+`,
    /// negative with `-` and zero with `=`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:<8} {:>9} {:>9} {:>8}  {}",
            "target", "source", "baseline", "system", "delta", "sign"
        );
        for r in &self.records {
            let marker = match round2(r.delta) {
                d if d > 0.0 => "+",
                d if d < 0.0 => "-",
                _ => "=",
            };
            let _ = writeln!(
                out,
                "{:<8} {:<8} {:>9} {:>9} {:>8}  {}",
                r.target,
                r.source.as_deref().unwrap_or("---"),
                fmt2(r.baseline_f1),
                fmt2(r.system_f1),
                r.delta_display,
                marker
            );
        }
        out
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}
