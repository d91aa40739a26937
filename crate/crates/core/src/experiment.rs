//! Ablation runs and the decode-time α sweep.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::answer::DecodeConfig;
use crate::data::Example;
use crate::embedding::WordVectors;
use crate::encoder::Similarity;
use crate::error::{Result, SmarnetError};
use crate::model::{Model, ModelConfig};
use crate::training::{evaluate_model, train, TrainConfig};

/// The α grid used for the checking-weight sweep.
pub const ALPHA_GRID: [f64; 5] = [1.0, 1.25, 1.5, 1.75, 2.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    NoPos,
    NoNer,
    NoTf,
    NoEm,
    NoSurprisal,
    NoQType,
    NoPosNer,
    InputConcat,
    PassageDirect,
    SingleHop,
    NoChecking,
    DotSimilarity,
    Hops(usize),
}

impl Variant {
    /// Full model plus every lexical feature ablation.
    pub const FEATURES: [Variant; 8] = [
        Variant::Full,
        Variant::NoPos,
        Variant::NoNer,
        Variant::NoTf,
        Variant::NoEm,
        Variant::NoSurprisal,
        Variant::NoQType,
        Variant::NoPosNer,
    ];
    /// Full model plus every component ablation.
    pub const COMPONENTS: [Variant; 5] = [
        Variant::Full,
        Variant::InputConcat,
        Variant::PassageDirect,
        Variant::SingleHop,
        Variant::NoChecking,
    ];

    /// Every feature and component row, each once.
    pub fn all_rows() -> Vec<Variant> {
        let mut v = Self::FEATURES.to_vec();
        v.extend(&Self::COMPONENTS[1..]);
        v
    }

    pub fn key(&self) -> String {
        match self {
            Variant::Full => "full".into(),
            Variant::NoPos => "no_pos".into(),
            Variant::NoNer => "no_ner".into(),
            Variant::NoTf => "no_tf".into(),
            Variant::NoEm => "no_em".into(),
            Variant::NoSurprisal => "no_surprisal".into(),
            Variant::NoQType => "no_qtype".into(),
            Variant::NoPosNer => "no_pos_ner".into(),
            Variant::InputConcat => "input_concat".into(),
            Variant::PassageDirect => "passage_direct".into(),
            Variant::SingleHop => "single_hop".into(),
            Variant::NoChecking => "no_checking".into(),
            Variant::DotSimilarity => "dot_similarity".into(),
            Variant::Hops(n) => format!("hops={n}"),
        }
    }

    /// Row label as printed in result tables.
    pub fn label(&self) -> String {
        match self {
            Variant::Full => "Full".into(),
            Variant::NoPos => "No f_pos".into(),
            Variant::NoNer => "No f_ner".into(),
            Variant::NoTf => "No f_tf".into(),
            Variant::NoEm => "No f_em".into(),
            Variant::NoSurprisal => "No f_surprisal".into(),
            Variant::NoQType => "No f_Qtype".into(),
            Variant::NoPosNer => "No f_pos and f_ner".into(),
            Variant::InputConcat => "Input concatenation".into(),
            Variant::PassageDirect => "Passage direct encoding".into(),
            Variant::SingleHop => "Memory network".into(),
            Variant::NoChecking => "Self-alignment checking".into(),
            Variant::DotSimilarity => "Dot-product similarity".into(),
            Variant::Hops(n) => format!("{n} hop(s)"),
        }
    }

    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoPos => c.features.pos = false,
            Variant::NoNer => c.features.ner = false,
            Variant::NoTf => c.features.tf = false,
            Variant::NoEm => c.features.em = false,
            Variant::NoSurprisal => c.features.surprisal = false,
            Variant::NoQType => c.features.qtype = false,
            Variant::NoPosNer => {
                c.features.pos = false;
                c.features.ner = false;
            }
            Variant::InputConcat => c.input_concat = true,
            Variant::PassageDirect => c.passage_direct = true,
            Variant::SingleHop => c.hops = 1,
            Variant::NoChecking => c.checking = false,
            Variant::DotSimilarity => c.similarity = Similarity::Dot,
            Variant::Hops(n) => c.hops = *n,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for Variant {
    type Err = SmarnetError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(n) = s.strip_prefix("hops=") {
            return match n.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Variant::Hops(n)),
                _ => Err(SmarnetError::invalid(format!("bad hop count in `{s}`"))),
            };
        }
        let all = [
            Variant::Full,
            Variant::NoPos,
            Variant::NoNer,
            Variant::NoTf,
            Variant::NoEm,
            Variant::NoSurprisal,
            Variant::NoQType,
            Variant::NoPosNer,
            Variant::InputConcat,
            Variant::PassageDirect,
            Variant::SingleHop,
            Variant::NoChecking,
            Variant::DotSimilarity,
        ];
        all.into_iter()
            .find(|v| v.key() == s)
            .ok_or_else(|| SmarnetError::invalid(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub label: String,
    pub seed: u64,
    pub exact_match: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub variant: String,
    pub label: String,
    pub seeds: usize,
    pub exact_match: f64,
    pub f1: f64,
}

/// Worker count from `SMARNET_THREADS`, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("SMARNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_one(
    variant: Variant,
    seed: u64,
    base: &ModelConfig,
    tc: &TrainConfig,
    train_set: &[Example],
    eval_set: &[Example],
    pretrained: &WordVectors,
) -> Result<AblationRow> {
    let cfg = variant.apply(base);
    let model = Model::new(cfg, train_set, pretrained.clone(), seed)?;
    let tc = TrainConfig {
        seed,
        eval_every: 0,
        ..tc.clone()
    };
    let t = train(model, &tc, train_set, None, |_| {})?;
    let r = evaluate_model(&t.inference_model(), eval_set, &tc.decode)?;
    log::info!("{} seed {seed}: EM {:.2} F1 {:.2}", variant.label(), r.exact_match, r.f1);
    Ok(AblationRow {
        variant: variant.key(),
        label: variant.label(),
        seed,
        exact_match: r.exact_match,
        f1: r.f1,
    })
}

/// What an ablation run trains and where it is scored.
#[derive(Clone, Copy, Debug)]
pub struct AblationPlan<'a> {
    pub variants: &'a [Variant],
    pub seeds: &'a [u64],
    pub base: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub train_set: &'a [Example],
    pub eval_set: &'a [Example],
    pub pretrained: &'a WordVectors,
    pub threads: usize,
}

/// Trains and scores every `(variant, seed)` pair on the same data. Rows come
/// back in variant-major order regardless of how many workers ran.
pub fn ablate(plan: &AblationPlan) -> Result<Vec<AblationRow>> {
    let AblationPlan {
        variants,
        seeds,
        base,
        train: tc,
        train_set,
        eval_set,
        pretrained,
        threads,
    } = *plan;
    if variants.is_empty() || seeds.is_empty() {
        return Err(SmarnetError::invalid("ablation needs at least one variant and one seed"));
    }
    let jobs: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<AblationRow>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(v, s)) = jobs.get(i) else { break };
                let r = run_one(v, s, base, tc, train_set, eval_set, pretrained);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Mean EM and F1 per variant, in first-appearance order.
pub fn summarize(rows: &[AblationRow]) -> Vec<AblationSummary> {
    let mut out: Vec<AblationSummary> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|s| s.variant == r.variant) {
            Some(s) => {
                s.seeds += 1;
                s.exact_match += r.exact_match;
                s.f1 += r.f1;
            }
            None => out.push(AblationSummary {
                variant: r.variant.clone(),
                label: r.label.clone(),
                seeds: 1,
                exact_match: r.exact_match,
                f1: r.f1,
            }),
        }
    }
    for s in &mut out {
        s.exact_match /= s.seeds as f64;
        s.f1 /= s.seeds as f64;
    }
    out
}

/// Aligned text table of variant means.
pub fn format_table(summary: &[AblationSummary]) -> String {
    let width = summary.iter().map(|s| s.label.len()).max().unwrap_or(0).max(7);
    let mut out = format!("{:<width$}  {:>7}  {:>7}\n", "Variant", "EM", "F1");
    for s in summary {
        let _ = writeln!(out, "{:<width$}  {:>7.3}  {:>7.3}", s.label, s.exact_match, s.f1);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub exact_match: f64,
    pub f1: f64,
}

/// Decodes `examples` once per α with a fixed trained model.
pub fn sweep_alpha(model: &Model, examples: &[Example], decode: &DecodeConfig, alphas: &[f64]) -> Result<Vec<AlphaRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let d = DecodeConfig { alpha, ..*decode };
            let r = evaluate_model(model, examples, &d)?;
            Ok(AlphaRow {
                alpha,
                exact_match: r.exact_match,
                f1: r.f1,
            })
        })
        .collect()
}

pub fn format_alpha_table(rows: &[AlphaRow]) -> String {
    let mut out = format!("{:>6}  {:>7}  {:>7}\n", "alpha", "EM", "F1");
    for r in rows {
        let _ = writeln!(out, "{:>6.2}  {:>7.3}  {:>7.3}", r.alpha, r.exact_match, r.f1);
    }
    out
}
