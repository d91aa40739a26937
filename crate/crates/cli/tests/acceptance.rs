//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use smarnet::answer::{check_and_select, combine, DecodeConfig, SpanDistributions};
use smarnet::checkpoint::Checkpoint;
use smarnet::data::{load_squad, Answer, Example};
use smarnet::embedding::WordVectors;
use smarnet::encoder::{Dropout, Similarity};
use smarnet::experiment::Variant;
use smarnet::gradcheck::{run_suite, MODEL_TOLERANCE, OP_TOLERANCE};
use smarnet::lexical::tokenize;
use smarnet::metrics::{em_metric, f1_metric};
use smarnet::model::{Model, ModelConfig};
use smarnet::tensor::Graph;
use smarnet::training::{mean_loss, predict_dataset, prepare_all, train, TrainConfig, Trainer};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/toy_squad.json")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn smarnet(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_smarnet"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`smarnet {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let results = run_suite(1.0).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{} {:.2e}", r.name, r.max_rel_err))
        .collect();
    ensure(failed.is_empty(), || format!("failed: {}", failed.join(", ")))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    let worst_op = results
        .iter()
        .filter(|r| r.tolerance == OP_TOLERANCE)
        .map(|r| r.max_rel_err)
        .fold(0.0, f64::max);
    let model = results.iter().find(|r| r.tolerance == MODEL_TOLERANCE).expect("model check");
    Ok(format!(
        "{} checks, worst op {:.1e} (< 1e-5), full model {:.1e} (< 1e-4), {:.1}s",
        results.len(),
        worst_op,
        model.max_rel_err,
        elapsed.as_secs_f64()
    ))
}

const WORDS: &[&str] = &[
    "river", "Paris", "the", "of", "1843", "capital", "wrote", "ocean", "is", "a", "bees", "Curie", "tower", "in",
    "green", "and", "was", "built", ",", ".", "energy", "who", "where",
];
const QWORDS: &[&str] = &["What", "Who", "When", "Which", "Where", "How", "Is", "Name"];

fn random_example(rng: &mut ChaCha8Rng, id: usize) -> Example {
    let m = rng.gen_range(1..=12);
    let n = rng.gen_range(1..=6);
    let context = (0..m).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
    let mut question = vec![QWORDS[rng.gen_range(0..QWORDS.len())]];
    question.extend((1..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]));
    let question = question.join(" ");
    let passage_tokens = tokenize(&context);
    let s = rng.gen_range(0..passage_tokens.len());
    let e = rng.gen_range(s..passage_tokens.len());
    let (a, b) = (passage_tokens[s].char_start, passage_tokens[e].char_end);
    Example {
        id: format!("r{id}"),
        answers: vec![Answer {
            text: context[a..b].to_string(),
            byte_start: a,
            span: Some((s, e)),
            partial: false,
        }],
        question_tokens: tokenize(&question),
        passage_tokens,
        context,
        question,
        passage_annotation: None,
        question_annotation: None,
    }
}

fn distribution_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut softmaxes, mut gates) = (0usize, 0usize);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let ex = random_example(&mut rng, i);
        let cfg = ModelConfig {
            emb_dim: rng.gen_range(2..=6),
            hidden: rng.gen_range(1..=4),
            char_width: rng.gen_range(1..=4),
            hops: rng.gen_range(1..=3),
            similarity: if rng.gen_bool(0.5) { Similarity::Trilinear } else { Similarity::Dot },
            input_concat: rng.gen_bool(0.2),
            passage_direct: rng.gen_bool(0.2),
            ..ModelConfig::default()
        };
        let dim = cfg.emb_dim;
        let model = Model::new(cfg, std::slice::from_ref(&ex), WordVectors::empty(dim), i as u64).map_err(|e| e.to_string())?;
        let x = model.prepare(&ex).map_err(|e| e.to_string())?;
        let mut g = Graph::new();
        let b = model.store.bind(&mut g, false);
        let f = model.forward(&mut g, &b, &x, &mut Dropout::off()).map_err(|e| e.to_string())?;
        let mut dists: Vec<Vec<f64>> = vec![g.value(f.p_s1).data().to_vec(), g.value(f.p_e1).data().to_vec()];
        let (s2, e2) = f.head2.ok_or("checking head missing")?;
        dists.push(g.value(s2).data().to_vec());
        dists.push(g.value(e2).data().to_vec());
        for a in &f.attention {
            let t = g.value(*a);
            for r in 0..t.rows() {
                dists.push(t.row(r).to_vec());
            }
        }
        for d in &dists {
            let sum: f64 = d.iter().sum();
            worst = worst.max((sum - 1.0).abs());
            ensure(d.iter().all(|&p| p >= 0.0), || format!("negative probability in instance {i}"))?;
            ensure((sum - 1.0).abs() <= 1e-9, || format!("instance {i}: sum {sum}"))?;
        }
        softmaxes += dists.len();
        for gv in &f.gates {
            let v = g.value(*gv).data();
            gates += v.len();
            ensure(v.iter().all(|&x| x > 0.0 && x < 1.0), || format!("gate outside (0,1) in instance {i}"))?;
        }
    }
    Ok(format!(
        "1000 instantiations, {softmaxes} distributions (max |sum-1| {worst:.1e}), {gates} gate values in (0,1)"
    ))
}

/// Lists all valid spans, sorts by score (desc) then position, takes the first.
fn brute_force_span(p_s: &[f64], p_e: &[f64], max_len: usize) -> (usize, usize) {
    let mut all = Vec::new();
    for s in 0..p_s.len() {
        for e in 0..p_e.len() {
            if s <= e && e - s < max_len {
                all.push((p_s[s] * p_e[e], s, e));
            }
        }
    }
    all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    (all[0].1, all[0].2)
}

fn decoding_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let levels = [0.0, 0.05, 0.1, 0.2, 0.3];
    let mut ties = 0;
    for i in 0..10_000 {
        let m = rng.gen_range(1..=12);
        let max_len = rng.gen_range(1..=5);
        let draw = |rng: &mut ChaCha8Rng| (0..m).map(|_| levels[rng.gen_range(0..levels.len())]).collect::<Vec<f64>>();
        let ps1 = draw(&mut rng);
        let pe1 = draw(&mut rng);
        let second = rng.gen_bool(0.5);
        let (ps2, pe2) = if second { (Some(draw(&mut rng)), Some(draw(&mut rng))) } else { (None, None) };
        let alpha = [1.0, 1.25, 1.5, 1.75, 2.0][rng.gen_range(0..5)];
        let d = SpanDistributions {
            p_s1: ps1.clone(),
            p_e1: pe1.clone(),
            p_s2: ps2.clone(),
            p_e2: pe2.clone(),
        };
        let cfg = DecodeConfig {
            alpha,
            constrained: true,
            max_len,
        };
        let got = check_and_select(&d, &cfg).map_err(|e| e.to_string())?;
        let weigh = |a: &[f64], b: &Option<Vec<f64>>| -> Vec<f64> {
            match b {
                Some(b) => a.iter().zip(b).map(|(x, y)| x + alpha * y).collect(),
                None => a.to_vec(),
            }
        };
        let (ps, pe) = (weigh(&ps1, &ps2), weigh(&pe1, &pe2));
        let want = brute_force_span(&ps, &pe, max_len);
        let best = ps[want.0] * pe[want.1];
        let n_best = (0..m)
            .flat_map(|s| (s..m.min(s + max_len)).map(move |e| (s, e)))
            .filter(|&(s, e)| ps[s] * pe[e] == best)
            .count();
        if n_best > 1 {
            ties += 1;
        }
        ensure((got.start, got.end) == want, || format!("instance {i}: got {:?}, want {want:?}", (got.start, got.end)))?;
    }
    Ok(format!("10000 instances agree with enumeration ({ties} with tied optima)"))
}

fn checking_arithmetic() -> Outcome {
    let p_s = combine(&[0.1, 0.9], Some(&[0.8, 0.2]), 1.5);
    ensure((p_s[0] - 1.3).abs() < 1e-12 && (p_s[1] - 1.2).abs() < 1e-12, || format!("got {p_s:?}"))?;
    let p_e = combine(&[0.25, 0.75], Some(&[0.5, 0.5]), 2.0);
    ensure((p_e[0] - 1.25).abs() < 1e-12 && (p_e[1] - 1.75).abs() < 1e-12, || format!("got {p_e:?}"))?;
    let one = combine(&[0.3, 0.7], Some(&[0.6, 0.4]), 1.0);
    ensure((one[0] - 0.9).abs() < 1e-12 && (one[1] - 1.1).abs() < 1e-12, || format!("got {one:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..200 {
        let m = rng.gen_range(1..=12);
        let raw = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<f64>>()
        };
        let (ps, pe) = (raw(&mut rng), raw(&mut rng));
        let d = SpanDistributions {
            p_s1: ps.clone(),
            p_e1: pe.clone(),
            p_s2: Some(ps),
            p_e2: Some(pe),
        };
        let mut picks = Vec::new();
        for alpha in [1.0, 1.25, 1.5, 1.75, 2.0] {
            let c = check_and_select(&d, &DecodeConfig { alpha, ..DecodeConfig::default() }).map_err(|e| e.to_string())?;
            picks.push((c.start, c.end));
        }
        ensure(picks.windows(2).all(|w| w[0] == w[1]), || format!("trial {trial}: picks differ {picks:?}"))?;
    }
    Ok("fixtures match to 1e-12; identical heads give the same span for all five alphas on 200 draws".into())
}

#[derive(Deserialize)]
struct MetricCase {
    pred: String,
    golds: Vec<String>,
    em: u8,
    f1: [u32; 2],
}

/// Independent scorer: whitespace tokens with articles dropped, pairwise
/// matching for the overlap.
fn oracle_tokens(s: &str) -> Vec<String> {
    let cleaned: String = s.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect();
    cleaned
        .split(|c: char| c.is_whitespace())
        .filter(|t| !t.is_empty() && !matches!(*t, "a" | "an" | "the"))
        .map(String::from)
        .collect()
}

fn oracle_scores(pred: &str, golds: &[String]) -> (f64, f64) {
    let p = oracle_tokens(pred);
    let mut em: f64 = 0.0;
    let mut f1: f64 = 0.0;
    for g in golds {
        let gt = oracle_tokens(g);
        if p == gt {
            em = 1.0;
        }
        let score = if p.is_empty() || gt.is_empty() {
            if p.is_empty() && gt.is_empty() {
                1.0
            } else {
                0.0
            }
        } else {
            let mut used = vec![false; gt.len()];
            let mut common = 0;
            for t in &p {
                if let Some(j) = (0..gt.len()).find(|&j| !used[j] && gt[j] == *t) {
                    used[j] = true;
                    common += 1;
                }
            }
            if common == 0 {
                0.0
            } else {
                let pr = common as f64 / p.len() as f64;
                let rc = common as f64 / gt.len() as f64;
                2.0 * pr * rc / (pr + rc)
            }
        };
        f1 = f1.max(score);
    }
    (em, f1)
}

fn metric_oracle() -> Outcome {
    let text = std::fs::read_to_string(fixture("metric_cases.json")).map_err(|e| e.to_string())?;
    let cases: Vec<MetricCase> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(cases.len() == 20, || format!("{} cases", cases.len()))?;
    let mut two_thirds = None;
    for (i, c) in cases.iter().enumerate() {
        let golds: Vec<&str> = c.golds.iter().map(String::as_str).collect();
        let (em, f1) = (em_metric(&c.pred, &golds), f1_metric(&c.pred, &golds));
        let (oem, of1) = oracle_scores(&c.pred, &c.golds);
        let hand = c.f1[0] as f64 / c.f1[1] as f64;
        ensure(em == oem && f1 == of1, || format!("case {i}: ({em}, {f1}) vs oracle ({oem}, {of1})"))?;
        ensure(em == c.em as f64 && (f1 - hand).abs() < 1e-12, || format!("case {i}: ({em}, {f1}) vs hand ({}, {hand})", c.em))?;
        if c.pred == "cat" && c.golds == ["cat sat"] {
            two_thirds = Some(f1);
        }
    }
    let t = two_thirds.ok_or("2/3 case missing")?;
    ensure((t - 0.666667).abs() < 1e-6 + 1e-9 && (t - 2.0 / 3.0).abs() < 1e-9, || format!("2/3 case scored {t}"))?;
    Ok(format!("20 cases agree with the oracle and hand values; 2/3 case = {t:.9}"))
}

fn overfit() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().unwrap();
    let data = corpus();
    let data = data.to_str().unwrap();
    let start = Instant::now();
    smarnet(&["train", "--data", data, "--out", out, "--epochs", "200", "--seed", "1"])?;
    let train_time = start.elapsed();
    let ckpt = format!("{out}/model.smnt");
    let preds = format!("{out}/preds.json");
    smarnet(&["predict", "--checkpoint", &ckpt, "--data", data, "--out", &preds])?;
    let report: serde_json::Value = serde_json::from_str(smarnet(&["eval", "--predictions", &preds, "--data", data])?.trim())
        .map_err(|e| e.to_string())?;
    let em = report["exact_match"].as_f64().ok_or("no exact_match")?;
    ensure(em >= 90.0, || format!("train EM {em}"))?;
    ensure(train_time < Duration::from_secs(1800), || format!("took {train_time:?}"))?;

    // reduced models still learn: loss of the averaged (inference) weights on five examples falls
    // every epoch
    let ds = load_squad(&corpus(), None).map_err(|e| e.to_string())?;
    let five = &ds.examples[..5];
    let mut reduced = Vec::new();
    for (name, cfg) in [
        ("hops=1", ModelConfig { hops: 1, ..ModelConfig::desk() }),
        ("no checking", ModelConfig { checking: false, ..ModelConfig::desk() }),
        ("hops=1, no checking", ModelConfig { hops: 1, checking: false, ..ModelConfig::desk() }),
    ] {
        let dim = cfg.emb_dim;
        let model = Model::new(cfg, five, WordVectors::empty(dim), 1).map_err(|e| e.to_string())?;
        let data = prepare_all(&model, five).map_err(|e| e.to_string())?;
        let mut t = Trainer::new(model, TrainConfig::desk()).map_err(|e| e.to_string())?;
        let mut losses = vec![mean_loss(&t.inference_model(), &data).map_err(|e| e.to_string())?];
        for _ in 0..10 {
            t.run_epoch(&data).map_err(|e| e.to_string())?;
            losses.push(mean_loss(&t.inference_model(), &data).map_err(|e| e.to_string())?);
        }
        ensure(losses.windows(2).all(|w| w[1] < w[0]), || format!("{name}: losses {losses:?}"))?;
        reduced.push(format!("{name} {:.2}->{:.2}", losses[0], losses[10]));
    }
    Ok(format!(
        "train EM {em:.1} after 200 epochs in {:.0}s; monotone loss: {}",
        train_time.as_secs_f64(),
        reduced.join(", ")
    ))
}

#[derive(Deserialize)]
struct Summary {
    variant: String,
    exact_match: f64,
}

fn ablation_parity() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("ablate.json");
    let data = corpus();
    let table = smarnet(&[
        "ablate",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "15",
        "--seeds",
        "1,2,3",
        "--out",
        out.to_str().unwrap(),
    ])?;
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let summary: Vec<Summary> = serde_json::from_value(json["summary"].clone()).map_err(|e| e.to_string())?;
    let runs = json["runs"].as_array().map_or(0, Vec::len);
    let expected: Vec<String> = Variant::all_rows().iter().map(Variant::key).collect();
    let got: Vec<String> = summary.iter().map(|s| s.variant.clone()).collect();
    ensure(got == expected, || format!("rows {got:?}"))?;
    ensure(runs == expected.len() * 3, || format!("{runs} runs"))?;
    ensure(table.lines().count() == expected.len() + 1, || format!("table:\n{table}"))?;
    let em = |k: &str| summary.iter().find(|s| s.variant == k).map(|s| s.exact_match).unwrap();
    let full = em("full");
    let rows: Vec<(String, f64)> = Variant::FEATURES.iter().map(|v| (v.key(), em(&v.key()))).collect();
    let held = rows.iter().filter(|(_, e)| full >= *e).count();
    let detail: Vec<String> = rows.iter().map(|(k, e)| format!("{k} {e:.1}")).collect();
    ensure(held >= 6, || format!("Full >= row in only {held}/8: {}", detail.join(", ")))?;
    Ok(format!("{} variants x 3 seeds; Full >= row in {held}/8 feature rows ({})", expected.len(), detail.join(", ")))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = corpus();
    let data = data.to_str().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let out = out.to_str().unwrap();
        smarnet(&["train", "--data", data, "--out", out, "--epochs", "4", "--seed", "9"])?;
        let preds = format!("{out}/preds.json");
        smarnet(&["predict", "--checkpoint", &format!("{out}/model.smnt"), "--data", data, "--out", &preds])?;
        let read = |p: &str| std::fs::read(p).map_err(|e| e.to_string());
        files.push((read(&preds)?, read(&format!("{out}/metrics.jsonl"))?, read(&format!("{out}/model.smnt"))?));
    }
    ensure(files[0].0 == files[1].0, || "prediction files differ".into())?;
    ensure(files[0].1 == files[1].1, || "metrics logs differ".into())?;
    ensure(files[0].2 == files[1].2, || "checkpoints differ".into())?;
    Ok(format!("prediction files byte-identical ({} bytes), logs and checkpoints too", files[0].0.len()))
}

fn checkpoint_round_trip() -> Outcome {
    let ds = load_squad(&corpus(), None).map_err(|e| e.to_string())?;
    let cfg = ModelConfig::desk();
    let model = Model::new(cfg.clone(), &ds.examples, WordVectors::empty(cfg.emb_dim), 3).map_err(|e| e.to_string())?;
    let tc = TrainConfig { epochs: 3, ..TrainConfig::desk() };
    let t = train(model, &tc, &ds.examples, None, |_| {}).map_err(|e| e.to_string())?;
    let before = t.inference_model();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.smnt");
    Checkpoint::from_trainer(&t).save(&path).map_err(|e| e.to_string())?;
    let after = Checkpoint::load(&path).and_then(|c| c.inference_model()).map_err(|e| e.to_string())?;
    let decode = DecodeConfig::default();
    let mut compared = 0;
    for ex in &ds.examples {
        let a = before.predict(&before.prepare(ex).unwrap(), &decode).map_err(|e| e.to_string())?;
        let b = after.predict(&after.prepare(ex).unwrap(), &decode).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{} differs after reload", ex.id))?;
        compared += 1;
    }
    let pa: BTreeMap<_, _> = predict_dataset(&before, &ds.examples, &decode).map_err(|e| e.to_string())?;
    let pb = predict_dataset(&after, &ds.examples, &decode).map_err(|e| e.to_string())?;
    ensure(pa == pb, || "answer strings differ".into())?;
    Ok(format!("{compared} examples: distributions and spans bit-identical after save/load"))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("Gradient suite", gradient_suite),
        ("Distribution invariants", distribution_invariants),
        ("Decoding oracle", decoding_oracle),
        ("Checking-rule arithmetic", checking_arithmetic),
        ("Metric oracle", metric_oracle),
        ("Overfit experiment", overfit),
        ("Ablation harness parity", ablation_parity),
        ("Determinism", determinism),
        ("Checkpoint round-trip", checkpoint_round_trip),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.to_lowercase().contains(&f.to_lowercase())) {
            continue;
        }
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
