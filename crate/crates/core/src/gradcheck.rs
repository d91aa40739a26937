//! Central finite-difference checks for every differentiable operation and
//! for the assembled model at toy dimensions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::answer::{point, self_align_inputs};
use crate::data::parse_squad;
use crate::embedding::{char_encode, fuse, lexical_gate, WordVectors};
use crate::encoder::{attend_question, fusion_input, similarity, Dropout};
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::tensor::{bigru, gru_cell, ElemOp, GruParams, Graph, Tensor, Var};
use crate::training::example_loss;

/// Perturbation for central differences.
pub const STEP: f64 = 1e-6;
/// Ceiling for single operations.
pub const OP_TOLERANCE: f64 = 1e-5;
/// Ceiling for the full model.
pub const MODEL_TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Scalarises `build`'s output with fixed random weights and compares the
/// analytic gradient of every input element against central differences.
/// `distort` multiplies the analytic gradient and exists to exercise the
/// failure path.
pub fn max_rel_err(
    inputs: &[Tensor],
    distort: f64,
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let eval = |xs: &[Tensor], weights: &Tensor, grads: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone(), grads)).collect();
        let y = build(&mut g, &vars)?;
        let w = g.constant(weights.clone());
        let prod = g.mul(y, w)?;
        let loss = g.sum(prod);
        let value = g.value(loss).item();
        if !grads {
            return Ok((value, vec![]));
        }
        let gs = g.backward(loss)?;
        let out = vars
            .iter()
            .zip(xs)
            .map(|(v, t)| gs.get(*v).map_or(vec![0.0; t.len()], <[f64]>::to_vec))
            .collect();
        Ok((value, out))
    };
    let shape = {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let y = build(&mut g, &vars)?;
        g.shape(y).to_vec()
    };
    let weights = Tensor::uniform(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(99));
    let (_, analytic) = eval(inputs, &weights, true)?;
    let mut worst: f64 = 0.0;
    let mut xs = inputs.to_vec();
    for k in 0..xs.len() {
        for i in 0..xs[k].len() {
            let orig = xs[k].data()[i];
            xs[k].data_mut()[i] = orig + STEP;
            let fp = eval(&xs, &weights, false)?.0;
            xs[k].data_mut()[i] = orig - STEP;
            let fm = eval(&xs, &weights, false)?.0;
            xs[k].data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[k][i] * distort, numeric));
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn rand_t(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Probability vector with no tiny entries.
fn rand_prob(n: usize, seed: u64) -> Tensor {
    let raw = Tensor::uniform(&[n], 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
    let e: Vec<f64> = raw.data().iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    Tensor::vector(e.into_iter().map(|v| v / s).collect())
}

fn gru_inputs(input: usize, hidden: usize, seed: u64) -> Vec<Tensor> {
    let mut v = Vec::with_capacity(9);
    for (k, s) in [[hidden, input], [hidden, input], [hidden, input], [hidden, hidden], [hidden, hidden], [hidden, hidden]]
        .iter()
        .enumerate()
    {
        v.push(rand_t(s, seed + k as u64));
    }
    for k in 0..3 {
        v.push(rand_t(&[hidden], seed + 6 + k));
    }
    v
}

fn gru_from(v: &[Var]) -> GruParams {
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

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;
type Case = (&'static str, Vec<Tensor>, Build);

fn op_cases() -> Vec<Case> {
    let elem = |kind: ElemOp| -> Build {
        Box::new(move |g, v| g.elementwise(kind, v[0], v[1]))
    };
    let mut gru_in = gru_inputs(3, 2, 40);
    gru_in.push(rand_t(&[3], 50));
    gru_in.push(rand_t(&[2], 51));
    let mut bigru_in = gru_inputs(3, 2, 60);
    bigru_in.extend(gru_inputs(3, 2, 70));
    bigru_in.push(rand_t(&[4, 3], 80));
    vec![
        ("add", vec![rand_t(&[2, 3], 1), rand_t(&[2, 3], 2)], elem(ElemOp::Add)),
        ("sub", vec![rand_t(&[2, 3], 3), rand_t(&[2, 3], 4)], elem(ElemOp::Sub)),
        ("mul", vec![rand_t(&[2, 3], 5), rand_t(&[2, 3], 6)], elem(ElemOp::Mul)),
        ("mul_row_broadcast", vec![rand_t(&[3, 4], 7), rand_t(&[4], 8)], elem(ElemOp::Mul)),
        ("scale_shift", vec![rand_t(&[5], 9)], Box::new(|g, v| Ok(g.scale_shift(v[0], -2.5, 1.0)))),
        ("one_minus", vec![rand_t(&[5], 10)], Box::new(|g, v| Ok(g.one_minus(v[0])))),
        ("sigmoid", vec![rand_t(&[2, 3], 11)], Box::new(|g, v| Ok(g.sigmoid(v[0])))),
        ("tanh", vec![rand_t(&[2, 3], 12)], Box::new(|g, v| Ok(g.tanh(v[0])))),
        ("matmul", vec![rand_t(&[2, 3], 13), rand_t(&[3, 2], 14)], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("matvec", vec![rand_t(&[3, 4], 15), rand_t(&[4], 16)], Box::new(|g, v| g.matmul(v[0], v[1]))),
        ("vecmat", vec![rand_t(&[3], 17), rand_t(&[3, 2], 18)], Box::new(|g, v| g.matmul(v[0], v[1]))),
        (
            "linear",
            vec![rand_t(&[3, 4], 19), rand_t(&[2, 4], 20), rand_t(&[2], 21)],
            Box::new(|g, v| g.linear(v[0], v[1], Some(v[2]))),
        ),
        ("transpose", vec![rand_t(&[2, 3], 22)], Box::new(|g, v| g.transpose(v[0]))),
        ("softmax_rows", vec![rand_t(&[3, 4], 23)], Box::new(|g, v| g.softmax(v[0], 1))),
        ("softmax_cols", vec![rand_t(&[3, 4], 24)], Box::new(|g, v| g.softmax(v[0], 0))),
        ("concat", vec![rand_t(&[2, 3], 25), rand_t(&[2, 2], 26)], Box::new(|g, v| g.concat(v, 1))),
        (
            "row_stack",
            vec![rand_t(&[3, 2], 27)],
            Box::new(|g, v| {
                let a = g.row(v[0], 2)?;
                let b = g.row(v[0], 0)?;
                g.stack_rows(&[a, b, a])
            }),
        ),
        (
            "gather_rows",
            vec![rand_t(&[4, 3], 28)],
            Box::new(|g, v| g.gather_rows(v[0], &[Some(1), None, Some(1), Some(3)])),
        ),
        (
            "conv1d",
            vec![rand_t(&[6, 2], 29), rand_t(&[3, 6], 30), rand_t(&[3], 31)],
            Box::new(|g, v| g.conv1d(v[0], v[1], v[2], 3)),
        ),
        ("max_over_rows", vec![rand_t(&[5, 3], 32)], Box::new(|g, v| g.max_over_rows(v[0]))),
        ("add_col", vec![rand_t(&[3, 4], 33), rand_t(&[3], 34)], Box::new(|g, v| g.add_col(v[0], v[1]))),
        ("sum", vec![rand_t(&[2, 3], 35)], Box::new(|g, v| Ok(g.sum(v[0])))),
        ("sum_squares", vec![rand_t(&[2, 3], 36)], Box::new(|g, v| Ok(g.sum_squares(v[0])))),
        ("nll", vec![rand_prob(5, 37)], Box::new(|g, v| g.nll(v[0], 2))),
        (
            "dropout",
            vec![rand_t(&[4, 3], 38)],
            Box::new(|g, v| g.dropout(v[0], 0.3, true, &mut ChaCha8Rng::seed_from_u64(5))),
        ),
        (
            "gru_cell",
            gru_in,
            Box::new(|g, v| {
                let p = gru_from(v);
                gru_cell(g, v[9], v[10], &p)
            }),
        ),
        (
            "bigru",
            bigru_in,
            Box::new(|g, v| {
                let f = gru_from(&v[..9]);
                let b = gru_from(&v[9..18]);
                Ok(bigru(g, v[18], &f, &b)?.states)
            }),
        ),
        (
            "char_cnn",
            vec![rand_t(&[6, 3], 90), rand_t(&[3, 6], 91), rand_t(&[3], 92)],
            Box::new(|g, v| char_encode(g, v[0], v[1], v[2], 2, &[1, 4, 0])),
        ),
        (
            "lexical_gate_fuse",
            vec![rand_t(&[3, 5], 93), rand_t(&[4, 5], 94), rand_t(&[4], 95), rand_t(&[3, 4], 96), rand_t(&[3, 4], 97)],
            Box::new(|g, v| {
                let gate = lexical_gate(g, v[0], v[1], v[2])?;
                fuse(g, v[3], v[4], gate)
            }),
        ),
        (
            "trilinear_attention",
            vec![rand_t(&[3, 4], 100), rand_t(&[2, 4], 101), rand_t(&[3, 4], 102)],
            Box::new(|g, v| {
                let s = similarity(g, v[0], v[1], Some(v[2]))?;
                let (_, qt) = attend_question(g, s, v[1])?;
                fusion_input(g, v[0], qt)
            }),
        ),
        (
            "dot_attention",
            vec![rand_t(&[3, 4], 103), rand_t(&[2, 4], 104)],
            Box::new(|g, v| {
                let s = similarity(g, v[0], v[1], None)?;
                Ok(attend_question(g, s, v[1])?.1)
            }),
        ),
        (
            "pointer",
            vec![rand_t(&[4, 3], 105), rand_t(&[3], 106), rand_t(&[3], 107)],
            Box::new(|g, v| {
                let (s, e) = point(g, v[0], v[1], v[2])?;
                g.concat(&[s, e], 0)
            }),
        ),
        (
            "self_align",
            vec![rand_t(&[4], 108), rand_t(&[3, 4], 109), rand_t(&[4, 4], 110), rand_t(&[4], 111)],
            Box::new(|g, v| Ok(self_align_inputs(g, v[0], v[1], v[2], v[3])?.0)),
        ),
    ]
}

/// Tiny passage (3 tokens) and question (2 tokens) for the model check.
const TOY: &str = r#"{"data": [{"paragraphs": [{"context": "Ada wrote code",
    "qas": [{"id": "g", "question": "Who wrote", "answers": [{"text": "code", "answer_start": 10}]}]}]}]}"#;

/// Span loss plus L2 penalty of the full model, differentiated with
/// respect to every trainable parameter.
pub fn model_check(distort: f64) -> Result<f64> {
    let d = parse_squad(TOY, "gradcheck", None)?;
    let cfg = ModelConfig {
        emb_dim: 4,
        hidden: 2,
        char_width: 2,
        hops: 2,
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, &d.examples, WordVectors::empty(4), 17)?;
    let x = model.prepare(&d.examples[0])?;
    let y = x.target.expect("toy answer maps");
    let trainable: Vec<usize> = model
        .store
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.trainable)
        .map(|(i, _)| i)
        .collect();
    let inputs: Vec<Tensor> = trainable.iter().map(|&i| model.store.entries()[i].value.clone()).collect();
    let ids: Vec<_> = trainable
        .iter()
        .map(|&i| model.store.id(&model.store.entries()[i].name).expect("registered"))
        .collect();
    let lambda = 1e-2;
    max_rel_err(&inputs, distort, |g, v| {
        let mut b = model.store.bind(g, false);
        for (id, var) in ids.iter().zip(v) {
            b.set(*id, *var);
        }
        let f = model.forward(g, &b, &x, &mut Dropout::off())?;
        let mut loss = example_loss(g, &f, y)?;
        for var in v {
            let sq = g.sum_squares(*var);
            let reg = g.scale_shift(sq, lambda, 0.0);
            loss = g.add(loss, reg)?;
        }
        Ok(loss)
    })
}

/// Runs every check once. With `distort` other than 1 every analytic
/// gradient is scaled before comparison, which must make checks fail.
pub fn run_suite(distort: f64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (name, inputs, build) in op_cases() {
        let err = max_rel_err(&inputs, distort, build)?;
        out.push(CheckResult {
            name: name.to_string(),
            max_rel_err: err,
            tolerance: OP_TOLERANCE,
            passed: err < OP_TOLERANCE,
        });
    }
    let err = model_check(distort)?;
    out.push(CheckResult {
        name: "full_model".to_string(),
        max_rel_err: err,
        tolerance: MODEL_TOLERANCE,
        passed: err < MODEL_TOLERANCE,
    });
    Ok(out)
}
