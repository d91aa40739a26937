//! SQuAD-shaped corpora: loading, answer-span mapping and splitting.

use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Result, SmarnetError};
use crate::lexical::{load_sidecar, tokenize, DocAnnotation, Token};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Answer {
    pub text: String,
    /// Byte offset of the answer in the context.
    pub byte_start: usize,
    /// Token span `(s, e)`, inclusive; `None` when the answer could not be
    /// located among the passage tokens.
    pub span: Option<(usize, usize)>,
    /// Set when the answer boundaries fall inside a token.
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub context: String,
    pub question: String,
    pub passage_tokens: Vec<Token>,
    pub question_tokens: Vec<Token>,
    pub answers: Vec<Answer>,
    pub passage_annotation: Option<DocAnnotation>,
    pub question_annotation: Option<DocAnnotation>,
}

impl Example {
    /// Span of the first mappable answer; the training target.
    pub fn target(&self) -> Option<(usize, usize)> {
        self.answers.iter().find_map(|a| a.span)
    }

    pub fn gold_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub source: String,
    pub examples: Vec<Example>,
    /// Examples without any mappable answer. They are kept for scoring.
    pub unmappable: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn subset(&self, examples: Vec<Example>) -> Dataset {
        let unmappable = examples.iter().filter(|e| e.target().is_none()).count();
        Dataset {
            source: self.source.clone(),
            examples,
            unmappable,
        }
    }
}

/// Byte offset of every char index, plus one past the end.
fn char_to_byte(text: &str) -> Vec<usize> {
    let mut v: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    v.push(text.len());
    v
}

/// Minimal token span covering the byte range `[start, end)`. The flag is
/// set when the range does not begin and end on token boundaries.
pub fn map_span(tokens: &[Token], start: usize, end: usize) -> Option<((usize, usize), bool)> {
    let s = tokens.iter().position(|t| t.char_end > start)?;
    let e = tokens.iter().rposition(|t| t.char_start < end)?;
    if s > e {
        return None;
    }
    let partial = tokens[s].char_start != start || tokens[e].char_end != end;
    Some(((s, e), partial))
}

fn locate_answer(context: &str, text: &str, byte_start: usize) -> Option<usize> {
    if context.get(byte_start..byte_start + text.len()) == Some(text) {
        return Some(byte_start);
    }
    context
        .match_indices(text)
        .map(|(i, _)| i)
        .min_by_key(|i| i.abs_diff(byte_start))
}

fn field<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Value> {
    v.get(key)
        .ok_or_else(|| SmarnetError::data(format!("{path}.{key}"), "missing field"))
}

fn string(v: &Value, key: &str, path: &str) -> Result<String> {
    field(v, key, path)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| SmarnetError::data(format!("{path}.{key}"), "expected a string"))
}

fn array<'a>(v: &'a Value, key: &str, path: &str) -> Result<&'a Vec<Value>> {
    field(v, key, path)?
        .as_array()
        .ok_or_else(|| SmarnetError::data(format!("{path}.{key}"), "expected an array"))
}

/// Parses SQuAD v1.1 JSON text. `sidecar` supplies annotations in document
/// order: each paragraph's context followed by its questions.
pub fn parse_squad(json: &str, source: &str, sidecar: Option<Vec<DocAnnotation>>) -> Result<Dataset> {
    let root: Value = serde_json::from_str(json).map_err(|e| SmarnetError::data(source, e.to_string()))?;
    let mut docs = sidecar.map(|d| d.into_iter());
    let mut next_doc = |path: &str| -> Result<Option<DocAnnotation>> {
        match docs.as_mut() {
            None => Ok(None),
            Some(it) => it
                .next()
                .map(Some)
                .ok_or_else(|| SmarnetError::data(path, "annotation sidecar has too few documents")),
        }
    };
    let mut examples = Vec::new();
    let mut unmappable = 0;
    let mut partial = 0;
    for (ai, article) in array(&root, "data", "$")?.iter().enumerate() {
        let apath = format!("$.data[{ai}]");
        for (pi, para) in array(article, "paragraphs", &apath)?.iter().enumerate() {
            let ppath = format!("{apath}.paragraphs[{pi}]");
            let context = string(para, "context", &ppath)?;
            let passage_tokens = tokenize(&context);
            let passage_annotation = next_doc(&ppath)?;
            let offsets = char_to_byte(&context);
            for (qi, qa) in array(para, "qas", &ppath)?.iter().enumerate() {
                let qpath = format!("{ppath}.qas[{qi}]");
                let id = match field(qa, "id", &qpath)? {
                    Value::String(s) => s.clone(),
                    Value::Number(n) => n.to_string(),
                    _ => return Err(SmarnetError::data(format!("{qpath}.id"), "expected a string")),
                };
                let question = string(qa, "question", &qpath)?;
                let question_annotation = next_doc(&qpath)?;
                let mut answers = Vec::new();
                for (ki, ans) in array(qa, "answers", &qpath)?.iter().enumerate() {
                    let kpath = format!("{qpath}.answers[{ki}]");
                    let text = string(ans, "text", &kpath)?;
                    let char_start = field(ans, "answer_start", &kpath)?
                        .as_u64()
                        .ok_or_else(|| SmarnetError::data(format!("{kpath}.answer_start"), "expected an integer"))?
                        as usize;
                    let byte_start = offsets.get(char_start).copied().unwrap_or(context.len());
                    let located = locate_answer(&context, &text, byte_start);
                    let mapped = located.and_then(|b| map_span(&passage_tokens, b, b + text.len()));
                    if mapped.is_some_and(|(_, p)| p) {
                        partial += 1;
                    }
                    answers.push(Answer {
                        text,
                        byte_start: located.unwrap_or(byte_start),
                        span: mapped.map(|(s, _)| s),
                        partial: mapped.is_some_and(|(_, p)| p),
                    });
                }
                let example = Example {
                    id,
                    context: context.clone(),
                    question_tokens: tokenize(&question),
                    question,
                    passage_tokens: passage_tokens.clone(),
                    answers,
                    passage_annotation: passage_annotation.clone(),
                    question_annotation,
                };
                if example.target().is_none() {
                    unmappable += 1;
                }
                examples.push(example);
            }
        }
    }
    if unmappable > 0 {
        warn!("{source}: {unmappable} examples have no answer mappable to tokens; excluded from training");
    }
    if partial > 0 {
        info!("{source}: {partial} answers start or end inside a token");
    }
    Ok(Dataset {
        source: source.to_string(),
        examples,
        unmappable,
    })
}

pub fn load_squad(path: &Path, sidecar: Option<&Path>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SmarnetError::data(path.display().to_string(), e.to_string()))?;
    let docs = sidecar.map(load_sidecar).transpose()?;
    parse_squad(&text, &path.display().to_string(), docs)
}

/// Seeded shuffle followed by contiguous cuts in the given proportions.
pub fn split(examples: &[Example], ratios: [f64; 3], seed: u64) -> Result<(Vec<Example>, Vec<Example>, Vec<Example>)> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(SmarnetError::invalid(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let n = examples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (((n as f64) * ratios[0]).round() as usize).min(n);
    let n_dev = (((n as f64) * ratios[1]).round() as usize).min(n - n_train);
    let pick = |ids: &[usize]| ids.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_dev]),
        pick(&order[n_train + n_dev..]),
    ))
}
