//! Two pointer heads and the weighted checking rule that combines them.
//!
//! ```text
//! head 1:  M = BiGRU(P~^1),  p_s1 = softmax(M w_s1),  p_e1 = softmax(M w_e1)
//! align:   g = σ(W P~_n^1 + b),  E_i = g ∘ P~_n^1 + (1 - g) ∘ P~_i^T,  A = BiGRU(E)
//! head 2:  p_s2 = softmax(A w_s2),  p_e2 = softmax(A w_e2)
//! check:   p_s = p_s1 + α p_s2,  p_e = p_e1 + α p_e2
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{gated_broadcast, AffineIds, BiGruIds};
use crate::error::{Result, SmarnetError};
use crate::lexical::Token;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub struct AnswerIds {
    pub aggregate: BiGruIds,
    pub w_s1: ParamId,
    pub w_e1: ParamId,
    pub align_gate: AffineIds,
    pub align: BiGruIds,
    pub w_s2: ParamId,
    pub w_e2: ParamId,
}

impl AnswerIds {
    pub fn register<R: Rng>(store: &mut ParamStore, hidden: usize, rng: &mut R) -> Result<Self> {
        let d = 2 * hidden;
        let vector = |store: &mut ParamStore, name: &str, rng: &mut R| {
            store.ensure(name, &[d], true, || Tensor::glorot(&[d], rng))
        };
        Ok(AnswerIds {
            aggregate: BiGruIds::register(store, "ans.aggregate", d, hidden, rng)?,
            w_s1: vector(store, "ans.w_s1", rng)?,
            w_e1: vector(store, "ans.w_e1", rng)?,
            align_gate: AffineIds::register(store, "ans.align_gate", d, d, rng)?,
            align: BiGruIds::register(store, "ans.align", d, hidden, rng)?,
            w_s2: vector(store, "ans.w_s2", rng)?,
            w_e2: vector(store, "ans.w_e2", rng)?,
        })
    }
}

/// Start and end distributions `softmax(states · w)`.
pub fn point(g: &mut Graph, states: Var, w_s: Var, w_e: Var) -> Result<(Var, Var)> {
    let ls = g.matmul(states, w_s)?;
    let le = g.matmul(states, w_e)?;
    Ok((g.softmax(ls, 0)?, g.softmax(le, 0)?))
}

pub fn point_first(g: &mut Graph, b: &Bound, ids: &AnswerIds, hop1_states: Var) -> Result<(Var, Var)> {
    let agg = ids.aggregate.run(g, b, hop1_states)?;
    point(g, agg.states, b[ids.w_s1], b[ids.w_e1])
}

/// Gate inputs of the alignment encoder. Returns `(E, g)`.
pub fn self_align_inputs(g: &mut Graph, summary: Var, last_states: Var, gate_w: Var, gate_b: Var) -> Result<(Var, Var)> {
    if g.shape(last_states).len() != 2 || g.shape(summary)[0] != g.shape(last_states)[1] {
        return Err(SmarnetError::shape("self_align", g.shape(summary), g.shape(last_states)));
    }
    let z = g.linear(summary, gate_w, Some(gate_b))?;
    let gv = g.sigmoid(z);
    Ok((gated_broadcast(g, gv, summary, last_states)?, gv))
}

/// Aligned states and the alignment gate.
pub fn self_align(g: &mut Graph, b: &Bound, ids: &AnswerIds, summary: Var, last_states: Var) -> Result<(Var, Var)> {
    let (e, gate) = self_align_inputs(g, summary, last_states, b[ids.align_gate.w], b[ids.align_gate.b])?;
    Ok((ids.align.run(g, b, e)?.states, gate))
}

pub fn point_second(g: &mut Graph, b: &Bound, ids: &AnswerIds, aligned: Var) -> Result<(Var, Var)> {
    point(g, aligned, b[ids.w_s2], b[ids.w_e2])
}

/// Pointer distributions as plain vectors. The second head is absent when
/// checking is disabled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanDistributions {
    pub p_s1: Vec<f64>,
    pub p_e1: Vec<f64>,
    pub p_s2: Option<Vec<f64>>,
    pub p_e2: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub alpha: f64,
    /// Restrict to `s <= e < s + max_len`; otherwise take independent argmaxes.
    pub constrained: bool,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            alpha: 1.5,
            constrained: true,
            max_len: 15,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 1.0) {
            return Err(SmarnetError::invalid(format!("alpha must be >= 1, got {}", self.alpha)));
        }
        if self.max_len == 0 {
            return Err(SmarnetError::invalid("max_len must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanChoice {
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
}

/// `p1 + α p2`, or `p1` alone when there is no second head.
pub fn combine(p1: &[f64], p2: Option<&[f64]>, alpha: f64) -> Vec<f64> {
    match p2 {
        Some(p2) => p1.iter().zip(p2).map(|(a, b)| a + alpha * b).collect(),
        None => p1.to_vec(),
    }
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Best `(s, e)` with `s <= e <= s + max_len - 1` by `p_s[s] · p_e[e]`;
/// ties go to the smallest `s`, then the smallest `e`.
pub fn constrained_argmax(p_s: &[f64], p_e: &[f64], max_len: usize) -> SpanChoice {
    let m = p_s.len().min(p_e.len());
    let mut best = SpanChoice {
        start: 0,
        end: 0,
        confidence: f64::NEG_INFINITY,
    };
    for s in 0..m {
        for e in s..m.min(s + max_len) {
            let c = p_s[s] * p_e[e];
            if c > best.confidence {
                best = SpanChoice { start: s, end: e, confidence: c };
            }
        }
    }
    best
}

pub fn check_and_select(d: &SpanDistributions, cfg: &DecodeConfig) -> Result<SpanChoice> {
    cfg.validate()?;
    let m = d.p_s1.len();
    if m == 0 || d.p_e1.len() != m {
        return Err(SmarnetError::shape("check_and_select", &[m], &[d.p_e1.len()]));
    }
    for p in [&d.p_s2, &d.p_e2].into_iter().flatten() {
        if p.len() != m {
            return Err(SmarnetError::shape("check_and_select", &[m], &[p.len()]));
        }
    }
    let p_s = combine(&d.p_s1, d.p_s2.as_deref(), cfg.alpha);
    let p_e = combine(&d.p_e1, d.p_e2.as_deref(), cfg.alpha);
    if cfg.constrained {
        Ok(constrained_argmax(&p_s, &p_e, cfg.max_len))
    } else {
        let (s, e) = (first_argmax(&p_s), first_argmax(&p_e));
        Ok(SpanChoice {
            start: s,
            end: e,
            confidence: p_s[s] * p_e[e],
        })
    }
}

/// Source text from the start of token `s` through the end of token `e`.
pub fn extract_answer(text: &str, tokens: &[Token], s: usize, e: usize) -> Result<String> {
    if s > e || e >= tokens.len() {
        return Err(SmarnetError::invalid(format!(
            "span ({s}, {e}) invalid for {} tokens",
            tokens.len()
        )));
    }
    text.get(tokens[s].char_start..tokens[e].char_end)
        .map(str::to_string)
        .ok_or_else(|| SmarnetError::invalid("token offsets do not match the text"))
}
