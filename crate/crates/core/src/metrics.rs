//! Exact-match and token-F1 scoring in the conventional SQuAD style.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::Example;

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid pattern"))
}

/// Lower-cases, drops ASCII punctuation, removes the articles a/an/the as
/// whole words and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lower = text.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// 1.0 when the normalized prediction equals any normalized gold.
pub fn em_metric(pred: &str, golds: &[&str]) -> f64 {
    let p = normalize_answer(pred);
    if golds.iter().any(|g| normalize_answer(g) == p) {
        1.0
    } else {
        0.0
    }
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p = normalize_answer(pred);
    let g = normalize_answer(gold);
    let pt: Vec<&str> = p.split_whitespace().collect();
    let gt: Vec<&str> = g.split_whitespace().collect();
    if pt.is_empty() || gt.is_empty() {
        return if pt.is_empty() && gt.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &gt {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &pt {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pt.len() as f64;
    let recall = common as f64 / gt.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best multiset token F1 over the gold answers.
pub fn f1_metric(pred: &str, golds: &[&str]) -> f64 {
    golds.iter().map(|g| token_f1(pred, g)).fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub prediction: Option<String>,
    pub golds: Vec<String>,
    pub em: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percentage in [0, 100].
    pub exact_match: f64,
    pub f1: f64,
    pub total: usize,
    /// Examples without a prediction; they score zero.
    pub missing: usize,
    /// Sorted by id.
    pub examples: Vec<EvalRecord>,
}

/// Macro-averaged EM and F1 over `examples`. Predictions for unknown ids
/// are ignored.
pub fn evaluate(predictions: &BTreeMap<String, String>, examples: &[Example]) -> EvalReport {
    let mut records: Vec<EvalRecord> = examples
        .iter()
        .map(|ex| {
            let golds = ex.gold_texts();
            let prediction = predictions.get(&ex.id).cloned();
            let (em, f1) = match &prediction {
                Some(p) if !golds.is_empty() => (em_metric(p, &golds), f1_metric(p, &golds)),
                _ => (0.0, 0.0),
            };
            EvalRecord {
                id: ex.id.clone(),
                prediction,
                golds: golds.into_iter().map(String::from).collect(),
                em,
                f1,
            }
        })
        .collect();
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let missing = records.iter().filter(|r| r.prediction.is_none()).count();
    if missing > 0 {
        log::warn!("{missing} example(s) have no prediction and score zero");
    }
    let n = records.len();
    let pct = |sum: f64| if n == 0 { 0.0 } else { 100.0 * sum / n as f64 };
    EvalReport {
        exact_match: pct(records.iter().map(|r| r.em).sum()),
        f1: pct(records.iter().map(|r| r.f1).sum()),
        total: n,
        missing,
        examples: records,
    }
}
