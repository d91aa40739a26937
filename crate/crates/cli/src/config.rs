//! Run configuration: preset, optional JSON file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use smarnet::encoder::Similarity;
use smarnet::model::ModelConfig;
use smarnet::training::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::preset(Preset::Desk)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Small dimensions and a training schedule that fits a laptop CPU.
    Desk,
    /// Full-size dimensions and hyper-parameters.
    Full,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Desk => RunConfig {
                model: ModelConfig::desk(),
                train: TrainConfig::desk(),
            },
            Preset::Full => RunConfig {
                model: ModelConfig::default(),
                train: TrainConfig::default(),
            },
        }
    }

    /// Reads a JSON file; absent fields take the preset's values.
    pub fn load(path: &Path, preset: Preset) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut base = serde_json::to_value(RunConfig::preset(preset))?;
        merge(&mut base, value.take());
        serde_json::from_value(base).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    match (base, over) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Architecture switches shared by `train` and `ablate`.
#[derive(Args, Clone, Debug, Default)]
pub struct ModelFlags {
    #[arg(long)]
    pub no_pos: bool,
    #[arg(long)]
    pub no_ner: bool,
    #[arg(long)]
    pub no_tf: bool,
    #[arg(long)]
    pub no_em: bool,
    #[arg(long)]
    pub no_surprisal: bool,
    #[arg(long)]
    pub no_qtype: bool,
    /// Concatenate word and character vectors instead of gating them.
    #[arg(long)]
    pub input_concat: bool,
    /// Encode the passage without the question gate.
    #[arg(long)]
    pub passage_direct: bool,
    /// Drop the second, self-aligned answer head.
    #[arg(long)]
    pub no_checking: bool,
    #[arg(long)]
    pub hops: Option<usize>,
    #[arg(long, value_parser = parse_similarity)]
    pub similarity: Option<Similarity>,
    #[arg(long)]
    pub emb_dim: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
}

fn parse_similarity(s: &str) -> Result<Similarity, String> {
    s.parse::<Similarity>().map_err(|e| e.to_string())
}

/// Optimisation and decoding overrides.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_scale: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub ema_decay: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Take independent start and end argmaxes instead of the constrained search.
    #[arg(long)]
    pub literal_argmax: bool,
}

/// Preset and optional config file.
#[derive(Args, Clone, Debug)]
pub struct ConfigFlags {
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// JSON file with `model` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ModelFlags {
    pub fn apply(&self, c: &mut ModelConfig) {
        let f = &mut c.features;
        f.pos &= !self.no_pos;
        f.ner &= !self.no_ner;
        f.tf &= !self.no_tf;
        f.em &= !self.no_em;
        f.surprisal &= !self.no_surprisal;
        f.qtype &= !self.no_qtype;
        c.input_concat |= self.input_concat;
        c.passage_direct |= self.passage_direct;
        c.checking &= !self.no_checking;
        if let Some(h) = self.hops {
            c.hops = h;
        }
        if let Some(s) = self.similarity {
            c.similarity = s;
        }
        if let Some(d) = self.emb_dim {
            c.emb_dim = d;
        }
        if let Some(h) = self.hidden {
            c.hidden = h;
        }
        if let Some(d) = self.dropout {
            c.dropout = d;
        }
    }
}

impl TrainFlags {
    pub fn apply(&self, t: &mut TrainConfig) {
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr_scale {
            t.lr_scale = v;
        }
        if let Some(v) = self.lambda {
            t.lambda = v;
        }
        if let Some(v) = self.ema_decay {
            t.ema_decay = v;
        }
        self.apply_decode(&mut t.decode);
    }

    pub fn apply_decode(&self, d: &mut smarnet::answer::DecodeConfig) {
        if let Some(v) = self.alpha {
            d.alpha = v;
        }
        if let Some(v) = self.max_len {
            d.max_len = v;
        }
        if self.literal_argmax {
            d.constrained = false;
        }
    }
}

/// Preset, then file, then flags.
pub fn resolve(cf: &ConfigFlags, mf: &ModelFlags, tf: &TrainFlags) -> Result<RunConfig, CliError> {
    let mut rc = match &cf.config {
        Some(p) => RunConfig::load(p, cf.preset)?,
        None => RunConfig::preset(cf.preset),
    };
    mf.apply(&mut rc.model);
    tf.apply(&mut rc.train);
    rc.validate()?;
    Ok(rc)
}
