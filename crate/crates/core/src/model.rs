//! The assembled reader: lexical features, gated embeddings, encoder,
//! interactive attention hops and the checked answer heads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answer::{check_and_select, point_first, point_second, self_align, AnswerIds, DecodeConfig, SpanChoice, SpanDistributions};
use crate::data::Example;
use crate::embedding::{embed_sequence, EmbeddingInput, EmbeddingParams, EmbeddingTables, Role, WordVectors};
use crate::encoder::{encode, Dropout, EncoderIds, Similarity};
use crate::error::{Result, SmarnetError};
use crate::lexical::{
    annotate_pair, build_feature_vector_masked, train_lm, FeatureMask, NGramLM, QTypeCues, Side, Token,
    PASSAGE_FEATURES, QUESTION_FEATURES,
};
use crate::params::{Bound, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

/// Architecture switches and sizes. Everything needed to rebuild the
/// parameter layout of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of word vectors, character vectors and the char CNN output.
    pub emb_dim: usize,
    /// Per-direction GRU state size; contextual states are twice this.
    pub hidden: usize,
    pub char_width: usize,
    pub hops: usize,
    pub similarity: Similarity,
    pub features: FeatureMask,
    /// Concatenate word and char vectors instead of gating them.
    pub input_concat: bool,
    /// Skip the question gate on passage inputs.
    pub passage_direct: bool,
    /// Use the second, self-aligned pointer head.
    pub checking: bool,
    pub dropout: f64,
    pub lm_order: usize,
    pub lm_k: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            emb_dim: 100,
            hidden: 100,
            char_width: 5,
            hops: 2,
            similarity: Similarity::Trilinear,
            features: FeatureMask::all(),
            input_concat: false,
            passage_direct: false,
            checking: true,
            dropout: 0.2,
            lm_order: 2,
            lm_k: 0.1,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for CPU-scale experiments.
    pub fn desk() -> Self {
        ModelConfig {
            emb_dim: 20,
            hidden: 20,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SmarnetError::invalid(m));
        if self.emb_dim == 0 || self.hidden == 0 || self.char_width == 0 {
            return bad("emb_dim, hidden and char_width must be positive".into());
        }
        if self.hops == 0 {
            return bad("hops must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.lm_order == 0 || !(self.lm_k >= 0.0) {
            return bad("lm_order must be >= 1 and lm_k >= 0".into());
        }
        Ok(())
    }

    pub fn passage_width(&self) -> usize {
        self.word_block() + PASSAGE_FEATURES
    }

    pub fn question_width(&self) -> usize {
        self.word_block() + QUESTION_FEATURES
    }

    fn word_block(&self) -> usize {
        if self.input_concat {
            2 * self.emb_dim
        } else {
            self.emb_dim
        }
    }
}

#[derive(Clone, Debug)]
struct Arch {
    emb: EmbeddingParams,
    enc: EncoderIds,
    ans: AnswerIds,
}

impl Arch {
    fn register(config: &ModelConfig, tables: &EmbeddingTables, store: &mut ParamStore, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let emb = EmbeddingParams::register(store, tables, PASSAGE_FEATURES, QUESTION_FEATURES, &mut rng)?;
        let enc = EncoderIds::register(
            store,
            config.question_width(),
            config.passage_width(),
            config.hidden,
            config.hops,
            config.similarity,
            &mut rng,
        )?;
        let ans = AnswerIds::register(store, config.hidden, &mut rng)?;
        Ok(Arch { emb, enc, ans })
    }
}

/// An example reduced to model inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub id: String,
    pub passage: EmbeddingInput,
    pub question: EmbeddingInput,
    pub target: Option<(usize, usize)>,
}

/// Graph nodes produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub p_s1: Var,
    pub p_e1: Var,
    pub head2: Option<(Var, Var)>,
    /// Attention matrices, one per hop.
    pub attention: Vec<Var>,
    /// Every sigmoid gate: lexical, question, passage and alignment.
    pub gates: Vec<Var>,
}

impl Forward {
    pub fn distributions(&self, g: &Graph) -> SpanDistributions {
        let v = |x: Var| g.value(x).data().to_vec();
        SpanDistributions {
            p_s1: v(self.p_s1),
            p_e1: v(self.p_e1),
            p_s2: self.head2.map(|(s, _)| v(s)),
            p_e2: self.head2.map(|(_, e)| v(e)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub tables: EmbeddingTables,
    pub lm: NGramLM,
    pub cues: QTypeCues,
    pub store: ParamStore,
    arch: Arch,
}

impl Model {
    /// Fresh model whose vocabularies and language model come from `train`.
    pub fn new(config: ModelConfig, train: &[Example], pretrained: WordVectors, seed: u64) -> Result<Self> {
        config.validate()?;
        let corpus: Vec<Vec<String>> = train
            .iter()
            .map(|e| e.passage_tokens.iter().map(|t| t.lower.clone()).collect())
            .collect();
        let lm = train_lm(&corpus, config.lm_order, config.lm_k)?;
        let tokens = train.iter().flat_map(|e| e.passage_tokens.iter().chain(&e.question_tokens));
        let tables = EmbeddingTables::build(config.emb_dim, config.char_width, seed, pretrained, tokens)?;
        let mut store = ParamStore::new();
        let arch = Arch::register(&config, &tables, &mut store, seed)?;
        Ok(Model {
            config,
            tables,
            lm,
            cues: QTypeCues::default(),
            store,
            arch,
        })
    }

    /// Reassembles a model from saved parts; every parameter must be present
    /// with the shape the configuration implies.
    pub fn from_parts(
        config: ModelConfig,
        mut tables: EmbeddingTables,
        lm: NGramLM,
        cues: QTypeCues,
        mut store: ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        tables.rebuild_indices();
        let before = store.len();
        let arch = Arch::register(&config, &tables, &mut store, 0)?;
        if store.len() != before {
            let missing: Vec<&str> = store.entries()[before..].iter().map(|e| e.name.as_str()).collect();
            return Err(SmarnetError::Checkpoint(format!("missing parameters: {}", missing.join(", "))));
        }
        Ok(Model {
            config,
            tables,
            lm,
            cues,
            store,
            arch,
        })
    }

    /// Annotates a copy of the example's tokens.
    pub fn annotate(&self, ex: &Example) -> Result<(Vec<Token>, Vec<Token>)> {
        let mut p = ex.passage_tokens.clone();
        let mut q = ex.question_tokens.clone();
        annotate_pair(
            &mut p,
            &mut q,
            &self.lm,
            ex.passage_annotation.as_ref(),
            ex.question_annotation.as_ref(),
            &self.cues,
        )?;
        Ok((p, q))
    }

    fn embedding_input(&self, tokens: &[Token], side: Side) -> Result<EmbeddingInput> {
        let rows = tokens
            .iter()
            .map(|t| build_feature_vector_masked(t, side, &self.config.features))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingInput {
            sources: tokens.iter().map(|t| self.tables.source(t)).collect(),
            chars: tokens.iter().map(|t| self.tables.char_ids(t)).collect(),
            features: Tensor::from_rows(&rows)?,
        })
    }

    pub fn prepare(&self, ex: &Example) -> Result<Prepared> {
        if ex.passage_tokens.is_empty() || ex.question_tokens.is_empty() {
            return Err(SmarnetError::data(ex.id.clone(), "empty passage or question"));
        }
        let (p, q) = self.annotate(ex)?;
        Ok(Prepared {
            id: ex.id.clone(),
            passage: self.embedding_input(&p, Side::Passage)?,
            question: self.embedding_input(&q, Side::Question)?,
            target: ex.target(),
        })
    }

    pub fn forward(&self, g: &mut Graph, b: &Bound, x: &Prepared, drop: &mut Dropout) -> Result<Forward> {
        let a = &self.arch;
        let c = &self.config;
        let (ep, gate_p) = embed_sequence(g, b, &a.emb, &self.tables, &x.passage, Role::Passage, c.input_concat)?;
        let (eq, gate_q) = embed_sequence(g, b, &a.emb, &self.tables, &x.question, Role::Question, c.input_concat)?;
        let enc = encode(g, b, &a.enc, ep, eq, c.passage_direct, drop)?;
        let first = &enc.hops[0];
        let last = enc.hops.last().expect("at least one hop");
        let (p_s1, p_e1) = point_first(g, b, &a.ans, first.states)?;
        let mut gates: Vec<Var> = [gate_p, gate_q, enc.gate_q1].into_iter().flatten().collect();
        gates.push(enc.gate_p1);
        let head2 = if c.checking {
            let (aligned, gate_a) = self_align(g, b, &a.ans, first.final_state, last.states)?;
            gates.push(gate_a);
            Some(point_second(g, b, &a.ans, aligned)?)
        } else {
            None
        };
        Ok(Forward {
            p_s1,
            p_e1,
            head2,
            attention: enc.hops.iter().map(|h| h.attention).collect(),
            gates,
        })
    }

    /// Inference with the given weights (e.g. averaged ones).
    pub fn predict_with(&self, store: &ParamStore, x: &Prepared, decode: &DecodeConfig) -> Result<(SpanDistributions, SpanChoice)> {
        let mut g = Graph::new();
        let b = store.bind(&mut g, false);
        let f = self.forward(&mut g, &b, x, &mut Dropout::off())?;
        let d = f.distributions(&g);
        let choice = check_and_select(&d, decode)?;
        Ok((d, choice))
    }

    pub fn predict(&self, x: &Prepared, decode: &DecodeConfig) -> Result<(SpanDistributions, SpanChoice)> {
        self.predict_with(&self.store, x, decode)
    }
}
