//! Span likelihood objective, AdaDelta with a global step multiplier,
//! weight averaging and the confidence-pooling ensemble.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answer::{extract_answer, DecodeConfig, SpanChoice};
use crate::data::Example;
use crate::encoder::Dropout;
use crate::error::{Result, SmarnetError};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{Forward, Model, Prepared};
use crate::params::{GradBuffer, ParamStore};
use crate::tensor::{Graph, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Multiplier on the AdaDelta update.
    pub lr_scale: f64,
    /// L2 weight on the squared norm of all trainable parameters.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ema_decay: f64,
    pub rho: f64,
    pub eps: f64,
    /// Global gradient-norm ceiling.
    pub clip_norm: f64,
    pub ensemble_size: usize,
    /// Evaluate on the dev set every this many epochs; 0 disables.
    pub eval_every: usize,
    pub decode: DecodeConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 48,
            lr_scale: 0.0005,
            lambda: 1e-4,
            epochs: 20,
            seed: 1,
            ema_decay: 0.999,
            rho: 0.95,
            eps: 1e-6,
            clip_norm: 5.0,
            ensemble_size: 3,
            eval_every: 1,
            decode: DecodeConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Settings that overfit a few dozen examples on a CPU.
    pub fn desk() -> Self {
        TrainConfig {
            batch_size: 8,
            lr_scale: 1.0,
            epochs: 200,
            ema_decay: 0.99,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SmarnetError::invalid(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr_scale > 0.0) || !self.lr_scale.is_finite() {
            return bad("lr_scale must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(0.0..1.0).contains(&self.ema_decay) || !(0.0..1.0).contains(&self.rho) {
            return bad("ema_decay and rho must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.clip_norm > 0.0) {
            return bad("eps and clip_norm must be positive");
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1");
        }
        self.decode.validate()
    }
}

/// `-ln p_s[y_s] - ln p_e[y_e]`.
pub fn span_loss(g: &mut Graph, p_s: Var, p_e: Var, y: (usize, usize)) -> Result<Var> {
    let a = g.nll(p_s, y.0)?;
    let b = g.nll(p_e, y.1)?;
    g.add(a, b)
}

/// Span loss summed over both answer heads.
pub fn example_loss(g: &mut Graph, f: &Forward, y: (usize, usize)) -> Result<Var> {
    let mut loss = span_loss(g, f.p_s1, f.p_e1, y)?;
    if let Some((s, e)) = f.head2 {
        let l2 = span_loss(g, s, e, y)?;
        loss = g.add(loss, l2)?;
    }
    Ok(loss)
}

/// `loss + λ‖θ‖²` over trainable parameters.
pub fn objective(loss: f64, store: &ParamStore, lambda: f64) -> f64 {
    loss + lambda * store.l2()
}

/// Adds the gradient of `λ‖θ‖²`.
pub fn add_l2_grad(buf: &mut GradBuffer, store: &ParamStore, lambda: f64) {
    if lambda == 0.0 {
        return;
    }
    for (g, e) in buf.grads.iter_mut().zip(store.entries()) {
        if e.trainable {
            for (gi, w) in g.iter_mut().zip(e.value.data()) {
                *gi += 2.0 * lambda * w;
            }
        }
    }
}

/// Rescales `buf` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(buf: &mut GradBuffer, max_norm: f64) -> f64 {
    let n = buf.norm();
    if n > max_norm {
        buf.scale(max_norm / n);
    }
    n
}

/// Diagonal AdaDelta accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaDelta {
    pub rho: f64,
    pub eps: f64,
    pub lr_scale: f64,
    /// Running average of squared gradients.
    pub eg2: Vec<Vec<f64>>,
    /// Running average of squared updates.
    pub edx2: Vec<Vec<f64>>,
}

impl AdaDelta {
    pub fn new(store: &ParamStore, rho: f64, eps: f64, lr_scale: f64) -> Self {
        let zeros = GradBuffer::zeros_like(store).grads;
        AdaDelta {
            rho,
            eps,
            lr_scale,
            eg2: zeros.clone(),
            edx2: zeros,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &GradBuffer) -> Result<()> {
        let n = store.len();
        if grads.grads.len() != n || self.eg2.len() != n || self.edx2.len() != n {
            return Err(SmarnetError::shape("adadelta", &[n], &[grads.grads.len()]));
        }
        let (rho, eps) = (self.rho, self.eps);
        for (i, e) in store.entries_mut().iter_mut().enumerate() {
            let g = &grads.grads[i];
            let len = e.value.len();
            if g.len() != len || self.eg2[i].len() != len || self.edx2[i].len() != len {
                return Err(SmarnetError::shape(
                    "adadelta",
                    e.value.shape(),
                    &[g.len()],
                ));
            }
            if !e.trainable {
                continue;
            }
            let w = e.value.data_mut();
            for j in 0..len {
                let eg = rho * self.eg2[i][j] + (1.0 - rho) * g[j] * g[j];
                let dx = -((self.edx2[i][j] + eps).sqrt() / (eg + eps).sqrt()) * g[j];
                self.eg2[i][j] = eg;
                self.edx2[i][j] = rho * self.edx2[i][j] + (1.0 - rho) * dx * dx;
                w[j] += self.lr_scale * dx;
            }
        }
        Ok(())
    }
}

/// `shadow ← decay·shadow + (1 − decay)·params`.
pub fn ema_update(shadow: &mut ParamStore, params: &ParamStore, decay: f64) -> Result<()> {
    if shadow.len() != params.len() {
        return Err(SmarnetError::shape("ema", &[shadow.len()], &[params.len()]));
    }
    for (s, p) in shadow.entries_mut().iter_mut().zip(params.entries()) {
        if s.value.shape() != p.value.shape() {
            return Err(SmarnetError::shape("ema", s.value.shape(), p.value.shape()));
        }
        for (a, b) in s.value.data_mut().iter_mut().zip(p.value.data()) {
            *a = decay * *a + (1.0 - decay) * b;
        }
    }
    Ok(())
}

/// Decay used at update `step` (1-based): warms up as `(1+t)/(10+t)` so
/// early averages are not dominated by the initialisation.
pub fn ema_decay_at(decay: f64, step: u64) -> f64 {
    decay.min((1.0 + step as f64) / (10.0 + step as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean example loss over the epoch.
    pub loss: f64,
    pub objective: f64,
    /// Mean pre-clipping gradient norm.
    pub grad_norm: f64,
    pub skipped: usize,
    pub dev_exact_match: Option<f64>,
    pub dev_f1: Option<f64>,
}

/// A model under training together with its optimizer and averaged weights.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub cfg: TrainConfig,
    pub optimizer: AdaDelta,
    pub shadow: ParamStore,
    pub epoch: usize,
    pub step: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizer = AdaDelta::new(&model.store, cfg.rho, cfg.eps, cfg.lr_scale);
        let shadow = model.store.clone();
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Trainer {
            model,
            cfg,
            optimizer,
            shadow,
            epoch: 0,
            step: 0,
            rng,
        })
    }

    /// Restores a trainer from saved state.
    pub fn resume(model: Model, cfg: TrainConfig, optimizer: AdaDelta, shadow: ParamStore, epoch: usize, step: u64) -> Result<Self> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Ok(Trainer {
            model,
            cfg,
            optimizer,
            shadow,
            epoch,
            step,
            rng,
        })
    }

    /// Loss of one example and its gradient, accumulated into `buf`.
    fn accumulate(&mut self, x: &Prepared, y: (usize, usize), buf: &mut GradBuffer) -> Result<f64> {
        let mut g = Graph::new();
        let b = self.model.store.bind(&mut g, true);
        let mut drop = Dropout::new(self.model.config.dropout, &mut self.rng);
        let f = self.model.forward(&mut g, &b, x, &mut drop)?;
        let loss = example_loss(&mut g, &f, y)?;
        let value = g.value(loss).item();
        if !value.is_finite() {
            return Err(SmarnetError::NonFiniteLoss { id: x.id.clone() });
        }
        let grads = g.backward(loss)?;
        buf.accumulate(&b, &grads);
        Ok(value)
    }

    /// One optimisation step on `batch`; returns summed loss and the
    /// pre-clipping gradient norm.
    pub fn train_batch(&mut self, batch: &[&Prepared]) -> Result<(f64, f64)> {
        let mut buf = GradBuffer::zeros_like(&self.model.store);
        let mut total = 0.0;
        let mut used = 0usize;
        for x in batch {
            if let Some(y) = x.target {
                total += self.accumulate(x, y, &mut buf)?;
                used += 1;
            }
        }
        if used == 0 {
            return Ok((0.0, 0.0));
        }
        buf.scale(1.0 / used as f64);
        add_l2_grad(&mut buf, &self.model.store, self.cfg.lambda);
        let norm = clip_global_norm(&mut buf, self.cfg.clip_norm);
        self.optimizer.step(&mut self.model.store, &buf)?;
        self.step += 1;
        ema_update(&mut self.shadow, &self.model.store, ema_decay_at(self.cfg.ema_decay, self.step))?;
        Ok((total, norm))
    }

    /// Shuffles `data` and runs one pass of mini-batch updates.
    pub fn run_epoch(&mut self, data: &[Prepared]) -> Result<EpochLog> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut loss = 0.0;
        let mut norm = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let (l, n) = self.train_batch(&batch)?;
            loss += l;
            norm += n;
            batches += 1;
        }
        self.epoch += 1;
        let trained = data.iter().filter(|x| x.target.is_some()).count();
        let mean = if trained == 0 { 0.0 } else { loss / trained as f64 };
        Ok(EpochLog {
            epoch: self.epoch,
            loss: mean,
            objective: objective(mean, &self.model.store, self.cfg.lambda),
            grad_norm: if batches == 0 { 0.0 } else { norm / batches as f64 },
            skipped: data.len() - trained,
            dev_exact_match: None,
            dev_f1: None,
        })
    }

    /// The model carrying averaged weights, as used for prediction.
    pub fn inference_model(&self) -> Model {
        let mut m = self.model.clone();
        m.store = self.shadow.clone();
        m
    }
}

/// Mean span loss of `data` under the model's current weights, without dropout.
pub fn mean_loss(model: &Model, data: &[Prepared]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for x in data {
        let Some(y) = x.target else { continue };
        let mut g = Graph::new();
        let b = model.store.bind(&mut g, false);
        let f = model.forward(&mut g, &b, x, &mut Dropout::off())?;
        let l = example_loss(&mut g, &f, y)?;
        total += g.value(l).item();
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}

pub fn prepare_all(model: &Model, examples: &[Example]) -> Result<Vec<Prepared>> {
    examples.iter().map(|e| model.prepare(e)).collect()
}

/// Trains for `cfg.epochs`, reporting each epoch to `on_epoch`. Dev scores
/// use the averaged weights.
pub fn train(
    model: Model,
    cfg: &TrainConfig,
    train_set: &[Example],
    dev: Option<&[Example]>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Trainer> {
    if train_set.is_empty() {
        return Err(SmarnetError::invalid("training set is empty"));
    }
    let data = prepare_all(&model, train_set)?;
    let unmapped = data.iter().filter(|x| x.target.is_none()).count();
    if unmapped > 0 {
        log::warn!("{unmapped} training example(s) without a mappable answer are skipped");
    }
    let mut t = Trainer::new(model, cfg.clone())?;
    for _ in 0..cfg.epochs {
        let mut log = t.run_epoch(&data)?;
        if let Some(dev) = dev.filter(|d| !d.is_empty()) {
            if cfg.eval_every > 0 && t.epoch % cfg.eval_every == 0 {
                let r = evaluate_model(&t.inference_model(), dev, &cfg.decode)?;
                log.dev_exact_match = Some(r.exact_match);
                log.dev_f1 = Some(r.f1);
            }
        }
        log::info!("epoch {} loss {:.4} grad_norm {:.3}", log.epoch, log.loss, log.grad_norm);
        on_epoch(&log);
    }
    Ok(t)
}

/// Answer text and span chosen for one example.
pub fn predict_example(model: &Model, ex: &Example, decode: &DecodeConfig) -> Result<(String, SpanChoice)> {
    let x = model.prepare(ex)?;
    let (_, c) = model.predict(&x, decode)?;
    Ok((span_text(ex, &c)?, c))
}

/// Unconstrained decoding can put the end before the start; such a pair reads as an empty answer.
fn span_text(ex: &Example, c: &SpanChoice) -> Result<String> {
    if c.start > c.end {
        log::debug!("{}: inverted span ({}, {})", ex.id, c.start, c.end);
        return Ok(String::new());
    }
    extract_answer(&ex.context, &ex.passage_tokens, c.start, c.end)
}

/// Id-to-answer map in the usual predictions-file shape.
pub fn predict_dataset(model: &Model, examples: &[Example], decode: &DecodeConfig) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for ex in examples {
        out.insert(ex.id.clone(), predict_example(model, ex, decode)?.0);
    }
    Ok(out)
}

pub fn evaluate_model(model: &Model, examples: &[Example], decode: &DecodeConfig) -> Result<EvalReport> {
    Ok(evaluate(&predict_dataset(model, examples, decode)?, examples))
}

/// Sums confidence over identical spans and returns the best pooled span;
/// ties go to the smallest start, then the smallest end.
pub fn pool_proposals(proposals: &[SpanChoice]) -> Option<SpanChoice> {
    let mut pooled: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for p in proposals {
        *pooled.entry((p.start, p.end)).or_default() += p.confidence;
    }
    let mut best: Option<SpanChoice> = None;
    for ((s, e), c) in pooled {
        if best.is_none_or(|b| c > b.confidence) {
            best = Some(SpanChoice {
                start: s,
                end: e,
                confidence: c,
            });
        }
    }
    best
}

/// Each member decodes independently; identical spans pool their confidence.
pub fn ensemble_predict(members: &[Model], ex: &Example, decode: &DecodeConfig) -> Result<(String, SpanChoice)> {
    if members.is_empty() {
        return Err(SmarnetError::invalid("ensemble needs at least one model"));
    }
    let proposals = members
        .iter()
        .map(|m| predict_example(m, ex, decode).map(|(_, c)| c))
        .collect::<Result<Vec<_>>>()?;
    let best = pool_proposals(&proposals).expect("non-empty proposals");
    Ok((span_text(ex, &best)?, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_squad;
    use crate::embedding::WordVectors;
    use crate::model::ModelConfig;
    use crate::tensor::Tensor;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn span_loss_values() {
        let mut g = Graph::new();
        let u = g.constant(Tensor::vector(vec![0.25; 4]));
        let l = span_loss(&mut g, u, u, (1, 2)).unwrap();
        assert!(approx(g.value(l).item(), 2.0 * 4f64.ln(), 1e-12));
        let one = g.constant(Tensor::vector(vec![0.0, 1.0]));
        let l = span_loss(&mut g, one, one, (1, 1)).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let half = g.constant(Tensor::vector(vec![0.5, 0.5]));
        let l2 = span_loss(&mut g, half, one, (1, 1)).unwrap();
        assert!(approx(g.value(l2).item(), 2f64.ln(), 1e-12));
    }

    #[test]
    fn objective_values() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(2.0), true).unwrap();
        s.insert("frozen", Tensor::scalar(5.0), false).unwrap();
        assert!(approx(objective(1.0, &s, 0.1), 1.4, 1e-12));
        assert_eq!(objective(1.0, &s, 0.0), 1.0);
        let mut zero = ParamStore::new();
        zero.insert("w", Tensor::zeros(&[3]), true).unwrap();
        assert_eq!(objective(0.7, &zero, 3.0), 0.7);
        let mut buf = GradBuffer::zeros_like(&s);
        add_l2_grad(&mut buf, &s, 0.1);
        assert_eq!(buf.grads, vec![vec![0.4], vec![0.0]]);
    }

    #[test]
    fn inverted_span_reads_as_empty_answer() {
        let json = r#"{"data": [{"paragraphs": [{"context": "Ada wrote code.",
            "qas": [{"id": "q", "question": "Who?", "answers": [{"text": "Ada", "answer_start": 0}]}]}]}]}"#;
        let ex = &parse_squad(json, "t", None).unwrap().examples[0];
        let pick = |start, end| SpanChoice { start, end, confidence: 1.0 };
        assert_eq!(span_text(ex, &pick(2, 1)).unwrap(), "");
        assert_eq!(span_text(ex, &pick(1, 2)).unwrap(), "wrote code");
        assert!(span_text(ex, &pick(0, 9)).is_err());
    }

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("x", Tensor::scalar(v), true).unwrap();
        s
    }

    fn grad(v: f64) -> GradBuffer {
        GradBuffer { grads: vec![vec![v]] }
    }

    #[test]
    fn adadelta_first_step_and_zero_gradient() {
        let mut s = scalar_store(1.0);
        let mut opt = AdaDelta::new(&s, 0.95, 1e-6, 1.0);
        opt.step(&mut s, &grad(0.0)).unwrap();
        assert_eq!(s.get(s.id("x").unwrap()).item(), 1.0);
        opt.step(&mut s, &grad(1.0)).unwrap();
        // from zero state: dx = -sqrt(eps) / sqrt(0.05 + eps)
        let dx = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!(approx(s.get(s.id("x").unwrap()).item(), 1.0 + dx, 1e-15));
        assert!(opt.step(&mut s, &GradBuffer { grads: vec![vec![1.0, 2.0]] }).is_err());
    }

    #[test]
    fn adadelta_bounded_and_descends() {
        let mut s = scalar_store(0.0);
        let mut opt = AdaDelta::new(&s, 0.95, 1e-6, 1.0);
        let mut prev = 0.0;
        let mut max_step: f64 = 0.0;
        for _ in 0..100 {
            opt.step(&mut s, &grad(1.0)).unwrap();
            let x = s.get(s.id("x").unwrap()).item();
            max_step = max_step.max((x - prev).abs());
            prev = x;
        }
        // independent scalar simulation
        let (mut eg, mut ed, mut x) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..100 {
            eg = 0.95 * eg + 0.05;
            let dx = -((ed + 1e-6).sqrt() / (eg + 1e-6).sqrt());
            ed = 0.95 * ed + 0.05 * dx * dx;
            x += dx;
        }
        assert!(approx(prev, x, 1e-12));
        assert!(max_step < 1.0);

        // f(x) = (x - 3)^2 decreases after one small step
        let mut s = scalar_store(0.0);
        let mut opt = AdaDelta::new(&s, 0.95, 1e-6, 0.5);
        opt.step(&mut s, &grad(2.0 * (0.0 - 3.0))).unwrap();
        let x = s.get(s.id("x").unwrap()).item();
        assert!((x - 3.0f64).powi(2) < 9.0);
    }

    #[test]
    fn ema_values() {
        let params = scalar_store(1.0);
        let mut shadow = scalar_store(0.0);
        ema_update(&mut shadow, &params, 0.999).unwrap();
        ema_update(&mut shadow, &params, 0.999).unwrap();
        assert!(approx(shadow.entries()[0].value.item(), 0.001999, 1e-15));
        let mut shadow = scalar_store(0.0);
        ema_update(&mut shadow, &params, 0.0).unwrap();
        assert_eq!(shadow.entries()[0].value.item(), 1.0);
        let mut shadow = scalar_store(0.0);
        for k in 1..=20 {
            ema_update(&mut shadow, &params, 0.9).unwrap();
            let gap = 1.0 - shadow.entries()[0].value.item();
            assert!(approx(gap, 0.9f64.powi(k), 1e-12));
        }
        assert_eq!(ema_decay_at(0.999, 1), 2.0 / 11.0);
        assert_eq!(ema_decay_at(0.999, 1_000_000), 0.999);
    }

    #[test]
    fn clipping() {
        let mut b = GradBuffer { grads: vec![vec![3.0], vec![4.0]] };
        assert_eq!(clip_global_norm(&mut b, 10.0), 5.0);
        assert_eq!(b.grads, vec![vec![3.0], vec![4.0]]);
        clip_global_norm(&mut b, 1.0);
        assert!(approx(b.norm(), 1.0, 1e-12));
    }

    #[test]
    fn pooling() {
        let c = |s, e, p| SpanChoice { start: s, end: e, confidence: p };
        assert_eq!(pool_proposals(&[c(1, 2, 0.3)]), Some(c(1, 2, 0.3)));
        let best = pool_proposals(&[c(0, 0, 0.5), c(2, 3, 0.3), c(2, 3, 0.3)]).unwrap();
        assert_eq!((best.start, best.end), (2, 3));
        assert!(approx(best.confidence, 0.6, 1e-12));
        let tie = pool_proposals(&[c(4, 4, 0.5), c(1, 3, 0.5), c(1, 2, 0.5)]).unwrap();
        assert_eq!((tie.start, tie.end), (1, 2));
        assert_eq!(pool_proposals(&[]), None);
    }

    const TOY: &str = r#"{"data": [{"paragraphs": [
        {"context": "Paris is the capital of France. It hosts the Louvre.",
         "qas": [{"id": "a", "question": "What is the capital of France?", "answers": [{"text": "Paris", "answer_start": 0}]},
                 {"id": "b", "question": "Which museum is in Paris?", "answers": [{"text": "the Louvre", "answer_start": 41}]}]}]}]}"#;

    fn tiny_model() -> (Model, Vec<Example>) {
        let d = parse_squad(TOY, "toy", None).unwrap();
        let cfg = ModelConfig {
            emb_dim: 6,
            hidden: 4,
            char_width: 3,
            ..ModelConfig::default()
        };
        (Model::new(cfg, &d.examples, WordVectors::empty(6), 3).unwrap(), d.examples)
    }

    #[test]
    fn one_epoch_reduces_loss_on_single_example() {
        let (m, ex) = tiny_model();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            ..TrainConfig::desk()
        };
        let data = prepare_all(&m, &ex[..1]).unwrap();
        let before = mean_loss(&m, &data).unwrap();
        let mut t = Trainer::new(m, cfg).unwrap();
        t.model.config.dropout = 0.0;
        t.run_epoch(&data).unwrap();
        assert!(mean_loss(&t.model, &data).unwrap() < before);
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let (m, ex) = tiny_model();
            let cfg = TrainConfig {
                epochs: 2,
                batch_size: 2,
                ..TrainConfig::desk()
            };
            let mut logs = vec![];
            let t = train(m, &cfg, &ex, Some(&ex), |l| logs.push(l.clone())).unwrap();
            (t.model.store, t.shadow, logs)
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert!(a.2[1].dev_f1.is_some());
    }

    #[test]
    fn ensemble_of_copies_matches_single_model() {
        let (m, ex) = tiny_model();
        let d = DecodeConfig::default();
        let single = predict_example(&m, &ex[0], &d).unwrap();
        let copies = vec![m.clone(), m.clone(), m];
        let (text, c) = ensemble_predict(&copies, &ex[0], &d).unwrap();
        assert_eq!(text, single.0);
        assert_eq!((c.start, c.end), (single.1.start, single.1.end));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { ema_decay: 1.0, ..TrainConfig::default() }.validate().is_err());
        let mut bad_alpha = TrainConfig::default();
        bad_alpha.decode.alpha = 0.5;
        assert!(bad_alpha.validate().is_err());
    }
}
