use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use smarnet::answer::DecodeConfig;
use smarnet::checkpoint::Checkpoint;
use smarnet::data::{load_squad, split, Dataset, Example};
use smarnet::embedding::WordVectors;
use smarnet::experiment::{self, AblationPlan, Variant};
use smarnet::gradcheck;
use smarnet::metrics::evaluate;
use smarnet::model::Model;
use smarnet::training::{ensemble_predict, train};

use crate::config::{resolve, ConfigFlags, ModelFlags, RunConfig, TrainFlags};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "smarnet", version, about = "Extractive reading comprehension with gated lexical embeddings and checked answers")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug)]
pub struct DataArgs {
    /// SQuAD-format JSON file.
    #[arg(long)]
    pub data: PathBuf,
    /// Optional POS/NER annotation file aligned with the data.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model (or several with --runs) and write checkpoints.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Separate dev set scored after each epoch.
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Train on an 80/10/10 split of --data instead of all of it.
        #[arg(long)]
        split: bool,
        /// Pretrained word vectors in `word v1 v2 ...` text format.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Independent runs with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Write an id-to-answer JSON file; several checkpoints form an ensemble.
    Predict {
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        literal_argmax: bool,
    },
    /// Score a predictions file.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Full report with per-example records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and score ablation variants across seeds.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated variant keys, e.g. `full,no_em,hops=3`. Defaults to every row.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
        seeds: Vec<u64>,
        /// Examples used for scoring.
        #[arg(long, value_enum, default_value_t = EvalOn::Train)]
        eval_on: EvalOn,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigFlags,
        #[command(flatten)]
        model: ModelFlags,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Decode one checkpoint at every checking weight on the grid.
    SweepAlpha {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference checks of every operation and the toy model.
    Gradcheck {
        /// Scale analytic gradients by 1.01 so that every check must fail.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalOn {
    /// Score on the training examples.
    Train,
    /// Train on the 80% split and score on the remaining 20%.
    Heldout,
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Train {
            data,
            dev,
            split: do_split,
            vectors,
            runs,
            out,
            cfg,
            model,
            train,
        } => cmd_train(&data, dev.as_deref(), do_split, vectors.as_deref(), runs, &out, &resolve(&cfg, &model, &train)?),
        Command::Predict {
            checkpoints,
            data,
            out,
            alpha,
            max_len,
            literal_argmax,
        } => {
            let flags = TrainFlags {
                alpha,
                max_len,
                literal_argmax,
                ..TrainFlags::default()
            };
            cmd_predict(&checkpoints, &data, &out, &flags)
        }
        Command::Eval { predictions, data, out } => cmd_eval(&predictions, &data, out.as_deref()),
        Command::Ablate {
            data,
            variants,
            seeds,
            eval_on,
            out,
            cfg,
            model,
            train,
        } => cmd_ablate(&data, &variants, &seeds, eval_on, out.as_deref(), &resolve(&cfg, &model, &train)?),
        Command::SweepAlpha { checkpoint, data, out } => cmd_sweep_alpha(&checkpoint, &data, out.as_deref()),
        Command::Gradcheck { corrupt } => cmd_gradcheck(corrupt),
    }
}

fn load(d: &DataArgs) -> Result<Dataset, CliError> {
    Ok(load_squad(&d.data, d.sidecar.as_deref())?)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn load_vectors(path: Option<&Path>, dim: usize, examples: &[Example]) -> Result<WordVectors, CliError> {
    let Some(path) = path else { return Ok(WordVectors::empty(dim)) };
    let words: HashSet<String> = examples
        .iter()
        .flat_map(|e| e.passage_tokens.iter().chain(&e.question_tokens))
        .flat_map(|t| [t.text.clone(), t.lower.clone()])
        .collect();
    let keep = |w: &str| words.contains(w);
    let wv = WordVectors::load(path, Some(&keep))?;
    if !wv.is_empty() && wv.dim() != dim {
        return Err(CliError::Usage(format!(
            "vectors in {} have {} dimensions, the model expects {dim}",
            path.display(),
            wv.dim()
        )));
    }
    Ok(wv)
}

fn checkpoint_name(runs: usize, k: usize) -> String {
    if runs == 1 {
        "model.smnt".into()
    } else {
        format!("model-{k}.smnt")
    }
}

fn cmd_train(
    data: &DataArgs,
    dev: Option<&Path>,
    do_split: bool,
    vectors: Option<&Path>,
    runs: usize,
    out: &Path,
    rc: &RunConfig,
) -> Result<(), CliError> {
    if runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let ds = load(data)?;
    let (train_set, dev_set) = if do_split {
        let (tr, dv, te) = split(&ds.examples, [0.8, 0.1, 0.1], rc.train.seed)?;
        let ids = |v: &[Example]| v.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
        fs::create_dir_all(out)?;
        write_json(
            &out.join("split.json"),
            &serde_json::json!({"train": ids(&tr), "dev": ids(&dv), "test": ids(&te)}),
        )?;
        (tr, Some(dv))
    } else {
        let dv = match dev {
            Some(p) => Some(load_squad(p, None)?.examples),
            None => None,
        };
        (ds.examples, dv)
    };
    if train_set.is_empty() {
        return Err(CliError::Data(format!("{} contains no examples", data.data.display())));
    }
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), rc)?;
    let pretrained = load_vectors(vectors, rc.model.emb_dim, &train_set)?;
    for k in 0..runs {
        let seed = rc.train.seed + k as u64;
        let tc = smarnet::training::TrainConfig {
            seed,
            ..rc.train.clone()
        };
        let model = Model::new(rc.model.clone(), &train_set, pretrained.clone(), seed)?;
        let log_name = if runs == 1 { "metrics.jsonl".to_string() } else { format!("metrics-{k}.jsonl") };
        let mut log_file = fs::File::create(out.join(log_name))?;
        let mut io_err = None;
        let t = train(model, &tc, &train_set, dev_set.as_deref(), |l| {
            let line = serde_json::to_string(l).expect("log line serialises");
            if let Err(e) = writeln!(log_file, "{line}") {
                io_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = io_err {
            return Err(e.into());
        }
        let path = out.join(checkpoint_name(runs, k));
        Checkpoint::from_trainer(&t).save(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_predict(checkpoints: &[PathBuf], data: &DataArgs, out: &Path, flags: &TrainFlags) -> Result<(), CliError> {
    let mut members = Vec::with_capacity(checkpoints.len());
    let mut decode: Option<DecodeConfig> = None;
    for p in checkpoints {
        let ck = Checkpoint::load(p)?;
        decode.get_or_insert(ck.train_config.decode);
        members.push(ck.inference_model()?);
    }
    let mut decode = decode.expect("at least one checkpoint");
    flags.apply_decode(&mut decode);
    decode.validate()?;
    let ds = load(data)?;
    let mut seen = HashSet::new();
    if let Some(dup) = ds.examples.iter().find(|e| !seen.insert(e.id.as_str())) {
        return Err(CliError::Data(format!("duplicate question id `{}`", dup.id)));
    }
    let mut preds = BTreeMap::new();
    for ex in &ds.examples {
        preds.insert(ex.id.clone(), ensemble_predict(&members, ex, &decode)?.0);
    }
    write_json(out, &preds)?;
    println!("wrote {} predictions to {}", preds.len(), out.display());
    Ok(())
}

fn cmd_eval(predictions: &Path, data: &DataArgs, out: Option<&Path>) -> Result<(), CliError> {
    let text = fs::read_to_string(predictions)?;
    let preds: BTreeMap<String, String> = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", predictions.display())))?;
    let ds = load(data)?;
    let report = evaluate(&preds, &ds.examples);
    if report.missing > 0 {
        eprintln!("warning: {} example(s) without a prediction scored as 0", report.missing);
    }
    println!(
        "{}",
        serde_json::json!({"exact_match": report.exact_match, "f1": report.f1, "total": report.total, "missing": report.missing})
    );
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    Ok(())
}

fn cmd_ablate(
    data: &DataArgs,
    variants: &[String],
    seeds: &[u64],
    eval_on: EvalOn,
    out: Option<&Path>,
    rc: &RunConfig,
) -> Result<(), CliError> {
    let variants: Vec<Variant> = if variants.is_empty() {
        Variant::all_rows()
    } else {
        variants.iter().map(|v| v.parse::<Variant>()).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(CliError::Usage("--seeds must list at least one seed".into()));
    }
    let ds = load(data)?;
    let (train_set, eval_set) = match eval_on {
        EvalOn::Train => (ds.examples.clone(), ds.examples),
        EvalOn::Heldout => {
            let (tr, mut dv, te) = split(&ds.examples, [0.8, 0.1, 0.1], rc.train.seed)?;
            dv.extend(te);
            (tr, dv)
        }
    };
    if train_set.is_empty() || eval_set.is_empty() {
        return Err(CliError::Data("not enough examples for the requested ablation".into()));
    }
    let pretrained = WordVectors::empty(rc.model.emb_dim);
    let rows = experiment::ablate(&AblationPlan {
        variants: &variants,
        seeds,
        base: &rc.model,
        train: &rc.train,
        train_set: &train_set,
        eval_set: &eval_set,
        pretrained: &pretrained,
        threads: experiment::worker_count(),
    })?;
    let summary = experiment::summarize(&rows);
    print!("{}", experiment::format_table(&summary));
    if let Some(p) = out {
        write_json(p, &serde_json::json!({"config": rc, "runs": rows, "summary": summary}))?;
    }
    Ok(())
}

fn cmd_sweep_alpha(checkpoint: &Path, data: &DataArgs, out: Option<&Path>) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.inference_model()?;
    let ds = load(data)?;
    let rows = experiment::sweep_alpha(&model, &ds.examples, &ck.train_config.decode, &experiment::ALPHA_GRID)?;
    print!("{}", experiment::format_alpha_table(&rows));
    if let Some(p) = out {
        write_json(p, &rows)?;
    }
    Ok(())
}

fn cmd_gradcheck(corrupt: bool) -> Result<(), CliError> {
    let start = Instant::now();
    let results = gradcheck::run_suite(if corrupt { 1.01 } else { 1.0 })?;
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{:<width$}  {:>10.3e}  < {:.0e}  {}",
            r.name,
            r.max_rel_err,
            r.tolerance,
            if r.passed { "PASS" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed, {:.2}s", results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        return Err(CliError::Check(format!("{failed} gradient check(s) exceeded tolerance")));
    }
    Ok(())
}
