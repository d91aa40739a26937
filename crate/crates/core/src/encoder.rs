//! Question-first contextual encoding and multi-hop interactive attention.
//!
//! ```text
//! u^q, Q1  = BiGRU(E_q)
//! E_p1     = g_q1 ∘ βQ1 + (1 - g_q1) ∘ E_p,      g_q1 = σ(W_q1 Q1 + b_q1)
//! u^p, P1  = BiGRU(E_p1)
//! E_q2     = g_p1 ∘ βP1 + (1 - g_p1) ∘ u^q,      g_p1 = σ(W_p1 P1 + b_p1)
//! u'^q, Q2 = BiGRU(E_q2)
//! hop t:   S = sim(H, u'^q), a_i = softmax(S_i), Q~ = a u'^q
//!          P~^t = BiGRU([H ; Q~ ; H ∘ Q~ ; H + Q~])   with H = u^p, then P~^{t-1}
//! ```

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmarnetError};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{bigru, BiGruOutput, GruParams, Graph, Tensor, Var};

/// Inverted dropout applied to recurrent inputs while training.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut dyn RngCore>,
}

impl<'a> Dropout<'a> {
    pub fn off() -> Self {
        Dropout { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, rng: &'a mut dyn RngCore) -> Self {
        Dropout {
            rate,
            rng: Some(rng),
        }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Result<Var> {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => g.dropout(x, self.rate, true, rng),
            _ => Ok(x),
        }
    }
}

/// Parameter handles of one GRU direction.
#[derive(Clone, Copy, Debug)]
pub struct GruIds([ParamId; 9]);

impl GruIds {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut ids = Vec::with_capacity(9);
        for gate in ["z", "r", "h"] {
            ids.push(store.ensure(&format!("{prefix}.w_{gate}"), &[hidden, input], true, || {
                Tensor::glorot(&[hidden, input], rng)
            })?);
        }
        for gate in ["z", "r", "h"] {
            ids.push(store.ensure(&format!("{prefix}.u_{gate}"), &[hidden, hidden], true, || {
                Tensor::glorot(&[hidden, hidden], rng)
            })?);
        }
        for gate in ["z", "r", "h"] {
            ids.push(store.ensure(&format!("{prefix}.b_{gate}"), &[hidden], true, || {
                Tensor::zeros(&[hidden])
            })?);
        }
        Ok(GruIds(ids.try_into().expect("nine ids")))
    }

    pub fn bind(&self, b: &Bound) -> GruParams {
        let v = self.0.map(|id| b[id]);
        GruParams {
            w_z: v[0],
            w_r: v[1],
            w_h: v[2],
            u_z: v[3],
            u_r: v[4],
            u_h: v[5],
            b_z: v[6],
            b_r: v[7],
            b_h: v[8],
        }
    }
}

/// A bidirectional GRU's two directions.
#[derive(Clone, Copy, Debug)]
pub struct BiGruIds {
    pub fwd: GruIds,
    pub bwd: GruIds,
}

impl BiGruIds {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(BiGruIds {
            fwd: GruIds::register(store, &format!("{prefix}.fwd"), input, hidden, rng)?,
            bwd: GruIds::register(store, &format!("{prefix}.bwd"), input, hidden, rng)?,
        })
    }

    pub fn run(&self, g: &mut Graph, b: &Bound, seq: Var) -> Result<BiGruOutput> {
        bigru(g, seq, &self.fwd.bind(b), &self.bwd.bind(b))
    }
}

/// An affine map `W x + b` with `W (out, in)`.
#[derive(Clone, Copy, Debug)]
pub struct AffineIds {
    pub w: ParamId,
    pub b: ParamId,
}

impl AffineIds {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        output: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(AffineIds {
            w: store.ensure(&format!("{prefix}.w"), &[output, input], true, || {
                Tensor::glorot(&[output, input], rng)
            })?,
            b: store.ensure(&format!("{prefix}.b"), &[output], true, || Tensor::zeros(&[output]))?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// `w · [p ; q ; p ∘ q]`.
    #[default]
    Trilinear,
    /// `p · q`.
    Dot,
}

impl std::str::FromStr for Similarity {
    type Err = SmarnetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trilinear" => Ok(Similarity::Trilinear),
            "dot" => Ok(Similarity::Dot),
            _ => Err(SmarnetError::invalid(format!(
                "similarity must be `trilinear` or `dot`, got `{s}`"
            ))),
        }
    }
}

/// Per-hop parameters; hops do not share weights.
#[derive(Clone, Copy, Debug)]
pub struct HopIds {
    /// `(3, d)` rows `w_p, w_q, w_pq` for the trilinear form.
    pub sim: Option<ParamId>,
    pub fusion: BiGruIds,
}

#[derive(Clone, Debug)]
pub struct EncoderIds {
    pub question: BiGruIds,
    pub gate_q1: AffineIds,
    pub beta_q: AffineIds,
    pub passage: BiGruIds,
    pub gate_p1: AffineIds,
    pub beta_p: AffineIds,
    pub requestion: BiGruIds,
    pub hops: Vec<HopIds>,
}

impl EncoderIds {
    /// `q_in`/`p_in` are the embedding widths, `hidden` the per-direction
    /// state size (states are `2 * hidden` wide).
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        q_in: usize,
        p_in: usize,
        hidden: usize,
        hops: usize,
        similarity: Similarity,
        rng: &mut R,
    ) -> Result<Self> {
        if hops == 0 {
            return Err(SmarnetError::invalid("hops must be at least 1"));
        }
        let d = 2 * hidden;
        let question = BiGruIds::register(store, "enc.question", q_in, hidden, rng)?;
        let gate_q1 = AffineIds::register(store, "enc.gate_q1", d, p_in, rng)?;
        let beta_q = AffineIds::register(store, "enc.beta_q", d, p_in, rng)?;
        let passage = BiGruIds::register(store, "enc.passage", p_in, hidden, rng)?;
        let gate_p1 = AffineIds::register(store, "enc.gate_p1", d, d, rng)?;
        let beta_p = AffineIds::register(store, "enc.beta_p", d, d, rng)?;
        let requestion = BiGruIds::register(store, "enc.requestion", d, hidden, rng)?;
        let mut hop_ids = Vec::with_capacity(hops);
        for t in 1..=hops {
            let sim = match similarity {
                Similarity::Trilinear => Some(store.ensure(&format!("hop{t}.sim"), &[3, d], true, || {
                    Tensor::glorot(&[3, d], rng)
                })?),
                Similarity::Dot => None,
            };
            let fusion = BiGruIds::register(store, &format!("hop{t}.fusion"), 4 * d, hidden, rng)?;
            hop_ids.push(HopIds { sim, fusion });
        }
        Ok(EncoderIds {
            question,
            gate_q1,
            beta_q,
            passage,
            gate_p1,
            beta_p,
            requestion,
            hops: hop_ids,
        })
    }
}

fn gate(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let z = g.linear(x, w, Some(b))?;
    Ok(g.sigmoid(z))
}

/// `gate ∘ v + (1 - gate) ∘ rows_i` for every row of `rows`; `gate` and `v`
/// are vectors broadcast over rows.
pub fn gated_broadcast(g: &mut Graph, gate_v: Var, v: Var, rows: Var) -> Result<Var> {
    let keep = g.one_minus(gate_v);
    let kept = g.mul(rows, keep)?;
    let inject = g.mul(gate_v, v)?;
    g.add(kept, inject)
}

pub fn encode_question(g: &mut Graph, b: &Bound, ids: &BiGruIds, eq: Var) -> Result<BiGruOutput> {
    ids.run(g, b, eq)
}

/// Question-gated passage inputs. Returns `(E_p1, g_q1)`.
pub fn gate_passage_inputs(
    g: &mut Graph,
    q1: Var,
    ep: Var,
    gate_ids: (Var, Var),
    beta_ids: (Var, Var),
) -> Result<(Var, Var)> {
    let gq = gate(g, q1, gate_ids.0, gate_ids.1)?;
    let beta = g.linear(q1, beta_ids.0, Some(beta_ids.1))?;
    if g.shape(beta)[0] != g.shape(ep)[1] {
        return Err(SmarnetError::shape("gate_passage_inputs", g.shape(ep), g.shape(beta)));
    }
    Ok((gated_broadcast(g, gq, beta, ep)?, gq))
}

pub fn encode_passage(g: &mut Graph, b: &Bound, ids: &BiGruIds, ep1: Var) -> Result<BiGruOutput> {
    ids.run(g, b, ep1)
}

/// Passage-informed question inputs `E_q2` and the gate `g_p1`.
pub fn requestion_inputs(
    g: &mut Graph,
    p1: Var,
    uq: Var,
    gate_ids: (Var, Var),
    beta_ids: (Var, Var),
) -> Result<(Var, Var)> {
    let gp = gate(g, p1, gate_ids.0, gate_ids.1)?;
    let beta = g.linear(p1, beta_ids.0, Some(beta_ids.1))?;
    if g.shape(beta)[0] != g.shape(uq)[1] {
        return Err(SmarnetError::shape("reencode_question", g.shape(uq), g.shape(beta)));
    }
    Ok((gated_broadcast(g, gp, beta, uq)?, gp))
}

/// Returns the re-encoded question and the gate `g_p1`.
pub fn reencode_question(
    g: &mut Graph,
    b: &Bound,
    ids: &EncoderIds,
    p1: Var,
    uq: Var,
    drop: &mut Dropout,
) -> Result<(BiGruOutput, Var)> {
    let (eq2, gp) = requestion_inputs(
        g,
        p1,
        uq,
        (b[ids.gate_p1.w], b[ids.gate_p1.b]),
        (b[ids.beta_p.w], b[ids.beta_p.b]),
    )?;
    let eq2 = drop.apply(g, eq2)?;
    Ok((ids.requestion.run(g, b, eq2)?, gp))
}

/// `m x n` similarity between passage rows `h` and question rows `u`.
/// `w_sim` is required for the trilinear form.
pub fn similarity(g: &mut Graph, h: Var, u: Var, w_sim: Option<Var>) -> Result<Var> {
    if g.shape(h).len() != 2 || g.shape(u).len() != 2 || g.shape(h)[1] != g.shape(u)[1] {
        return Err(SmarnetError::shape("similarity", g.shape(h), g.shape(u)));
    }
    let ut = g.transpose(u)?;
    let Some(w) = w_sim else {
        return g.matmul(h, ut);
    };
    let d = g.shape(h)[1];
    if g.shape(w) != [3, d] {
        return Err(SmarnetError::shape("similarity weights", &[3, d], g.shape(w)));
    }
    let wp = g.row(w, 0)?;
    let wq = g.row(w, 1)?;
    let wpq = g.row(w, 2)?;
    let sp = g.matmul(h, wp)?;
    let sq = g.matmul(u, wq)?;
    let hw = g.mul(h, wpq)?;
    let cross = g.matmul(hw, ut)?;
    let with_p = g.add_col(cross, sp)?;
    g.add(with_p, sq)
}

/// Row-wise attention over question words and the attended question
/// `Q~ = a u`. Returns `(a, Q~)`.
pub fn attend_question(g: &mut Graph, s: Var, u: Var) -> Result<(Var, Var)> {
    let a = g.softmax(s, 1)?;
    let qt = g.matmul(a, u)?;
    Ok((a, qt))
}

/// `[h ; q ; h ∘ q ; h + q]` row by row.
pub fn fusion_input(g: &mut Graph, h: Var, qt: Var) -> Result<Var> {
    if g.shape(h) != g.shape(qt) {
        return Err(SmarnetError::shape("fuse_hop", g.shape(h), g.shape(qt)));
    }
    let prod = g.mul(h, qt)?;
    let sum = g.add(h, qt)?;
    g.concat(&[h, qt, prod, sum], 1)
}

pub fn fuse_hop(
    g: &mut Graph,
    b: &Bound,
    ids: &BiGruIds,
    h: Var,
    qt: Var,
    drop: &mut Dropout,
) -> Result<BiGruOutput> {
    let nu = fusion_input(g, h, qt)?;
    let nu = drop.apply(g, nu)?;
    ids.run(g, b, nu)
}

#[derive(Clone, Copy, Debug)]
pub struct HopState {
    pub similarity: Var,
    pub attention: Var,
    pub attended: Var,
    pub states: Var,
    pub final_state: Var,
}

pub fn run_hops(
    g: &mut Graph,
    b: &Bound,
    hops: &[HopIds],
    up: Var,
    uq: Var,
    drop: &mut Dropout,
) -> Result<Vec<HopState>> {
    if hops.is_empty() {
        return Err(SmarnetError::invalid("hops must be at least 1"));
    }
    let mut h = up;
    let mut out = Vec::with_capacity(hops.len());
    for hop in hops {
        let s = similarity(g, h, uq, hop.sim.map(|id| b[id]))?;
        let (a, qt) = attend_question(g, s, uq)?;
        let fused = fuse_hop(g, b, &hop.fusion, h, qt, drop)?;
        out.push(HopState {
            similarity: s,
            attention: a,
            attended: qt,
            states: fused.states,
            final_state: fused.final_state,
        });
        h = fused.states;
    }
    Ok(out)
}

/// Everything the answer layer needs from the encoder.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub question_states: Var,
    pub q1: Var,
    pub gated_passage: Var,
    pub passage_states: Var,
    pub p1: Var,
    pub requestion_states: Var,
    pub q2: Var,
    pub hops: Vec<HopState>,
    /// `None` when the question gate is bypassed.
    pub gate_q1: Option<Var>,
    pub gate_p1: Var,
}

/// Runs the full encoder over embedded passage `ep` and question `eq`.
/// With `passage_direct` the question gate is skipped and `E_p1 = E_p`.
pub fn encode(
    g: &mut Graph,
    b: &Bound,
    ids: &EncoderIds,
    ep: Var,
    eq: Var,
    passage_direct: bool,
    drop: &mut Dropout,
) -> Result<EncoderOutput> {
    let eq = drop.apply(g, eq)?;
    let q = encode_question(g, b, &ids.question, eq)?;
    let (ep1, gate_q1) = if passage_direct {
        (ep, None)
    } else {
        let (ep1, gq) = gate_passage_inputs(
            g,
            q.final_state,
            ep,
            (b[ids.gate_q1.w], b[ids.gate_q1.b]),
            (b[ids.beta_q.w], b[ids.beta_q.b]),
        )?;
        (ep1, Some(gq))
    };
    let ep1_in = drop.apply(g, ep1)?;
    let p = encode_passage(g, b, &ids.passage, ep1_in)?;
    let (rq, gate_p1) = reencode_question(g, b, ids, p.final_state, q.states, drop)?;
    let hops = run_hops(g, b, &ids.hops, p.states, rq.states, drop)?;
    Ok(EncoderOutput {
        question_states: q.states,
        q1: q.final_state,
        gated_passage: ep1,
        passage_states: p.states,
        p1: p.final_state,
        requestion_states: rq.states,
        q2: rq.final_state,
        hops,
        gate_q1,
        gate_p1,
    })
}
