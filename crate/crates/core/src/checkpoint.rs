//! Versioned binary checkpoints.
//!
//! Layout: the magic line `SMNT1\n`, a little-endian `u64` header length,
//! a JSON header, then every tensor listed in the header as row-major
//! little-endian `f64` values in header order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTables;
use crate::error::{Result, SmarnetError};
use crate::lexical::{NGramLM, QTypeCues};
use crate::model::{Model, ModelConfig};
use crate::params::{ParamEntry, ParamStore};
use crate::tensor::Tensor;
use crate::training::{AdaDelta, TrainConfig, Trainer};

pub const MAGIC: &[u8] = b"SMNT1\n";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Params,
    Shadow,
    SqGrad,
    SqUpdate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorMeta {
    group: Group,
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    step: u64,
    tables: EmbeddingTables,
    lm: String,
    cues: QTypeCues,
    tensors: Vec<TensorMeta>,
}

fn meta(group: Group, store: &ParamStore) -> impl Iterator<Item = TensorMeta> + '_ {
    store.entries().iter().map(move |e| TensorMeta {
        group,
        name: e.name.clone(),
        shape: e.value.shape().to_vec(),
        trainable: e.trainable,
    })
}

/// Everything needed to predict with, or resume, a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub epoch: usize,
    pub step: u64,
    pub tables: EmbeddingTables,
    pub lm: NGramLM,
    pub cues: QTypeCues,
    pub params: ParamStore,
    pub shadow: ParamStore,
    pub optimizer: AdaDelta,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            model_config: t.model.config.clone(),
            train_config: t.cfg.clone(),
            epoch: t.epoch,
            step: t.step,
            tables: t.model.tables.clone(),
            lm: t.model.lm.clone(),
            cues: t.model.cues.clone(),
            params: t.model.store.clone(),
            shadow: t.shadow.clone(),
            optimizer: t.optimizer.clone(),
        }
    }

    fn model_with(&self, store: ParamStore) -> Result<Model> {
        Model::from_parts(
            self.model_config.clone(),
            self.tables.clone(),
            self.lm.clone(),
            self.cues.clone(),
            store,
        )
    }

    /// The model with averaged weights, used for prediction.
    pub fn inference_model(&self) -> Result<Model> {
        self.model_with(self.shadow.clone())
    }

    pub fn into_trainer(self) -> Result<Trainer> {
        let model = self.model_with(self.params.clone())?;
        Trainer::resume(model, self.train_config, self.optimizer, self.shadow, self.epoch, self.step)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors: Vec<TensorMeta> = meta(Group::Params, &self.params)
            .chain(meta(Group::Shadow, &self.shadow))
            .chain(meta(Group::SqGrad, &self.params))
            .chain(meta(Group::SqUpdate, &self.params))
            .collect();
        let mut blocks: Vec<&[f64]> = Vec::new();
        blocks.extend(self.params.entries().iter().map(|e| e.value.data()));
        blocks.extend(self.shadow.entries().iter().map(|e| e.value.data()));
        blocks.extend(self.optimizer.eg2.iter().map(Vec::as_slice));
        blocks.extend(self.optimizer.edx2.iter().map(Vec::as_slice));
        let header = Header {
            model: self.model_config.clone(),
            train: self.train_config.clone(),
            epoch: self.epoch,
            step: self.step,
            tables: self.tables.clone(),
            lm: self.lm.to_text(),
            cues: self.cues.clone(),
            tensors,
        };
        for (meta, block) in header.tensors.iter().zip(&blocks) {
            if meta.shape.iter().product::<usize>() != block.len() {
                return Err(SmarnetError::Checkpoint(format!("tensor `{}` has inconsistent size", meta.name)));
            }
        }
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for block in blocks {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| SmarnetError::Checkpoint(m.to_string());
        let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("not an SMNT1 checkpoint"))?;
        if rest.len() < 8 {
            return Err(bad("truncated header length"));
        }
        let (len, rest) = rest.split_at(8);
        let len = u64::from_le_bytes(len.try_into().expect("8 bytes")) as usize;
        if rest.len() < len {
            return Err(bad("truncated header"));
        }
        let (json, mut body) = rest.split_at(len);
        let header: Header = serde_json::from_slice(json)?;
        let mut groups: [Vec<ParamEntry>; 4] = Default::default();
        for meta in header.tensors {
            let n: usize = meta.shape.iter().product();
            if body.len() < n * 8 {
                return Err(bad("truncated tensor data"));
            }
            let (raw, tail) = body.split_at(n * 8);
            body = tail;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let slot = match meta.group {
                Group::Params => 0,
                Group::Shadow => 1,
                Group::SqGrad => 2,
                Group::SqUpdate => 3,
            };
            groups[slot].push(ParamEntry {
                name: meta.name,
                value: Tensor::new(meta.shape, data)?,
                trainable: meta.trainable,
            });
        }
        if !body.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        let [params, shadow, eg2, edx2] = groups;
        let names = |g: &[ParamEntry]| g.iter().map(|e| e.name.clone()).collect::<Vec<_>>();
        if names(&params) != names(&shadow) || names(&params) != names(&eg2) || names(&params) != names(&edx2) {
            return Err(bad("parameter, average and optimizer groups disagree"));
        }
        let mut tables = header.tables;
        tables.rebuild_indices();
        let t = &header.train;
        Ok(Checkpoint {
            model_config: header.model,
            train_config: header.train.clone(),
            epoch: header.epoch,
            step: header.step,
            tables,
            lm: NGramLM::from_text(&header.lm)?,
            cues: header.cues,
            params: ParamStore::from_entries(params)?,
            shadow: ParamStore::from_entries(shadow)?,
            optimizer: AdaDelta {
                rho: t.rho,
                eps: t.eps,
                lr_scale: t.lr_scale,
                eg2: eg2.into_iter().map(|e| e.value.into_data()).collect(),
                edx2: edx2.into_iter().map(|e| e.value.into_data()).collect(),
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
