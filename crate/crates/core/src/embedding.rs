//! Word and character embeddings mixed by lexical-feature gates.
//!
//! ```text
//! g = σ(W E_v + b)
//! h = g ∘ E_w + (1 - g) ∘ E_c
//! E = [h ; E_v]
//! ```

use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SmarnetError};
use crate::lexical::Token;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

/// Range of the uniform distribution used for hashed word vectors.
pub const OOV_BOUND: f64 = 0.25;

/// Frozen pretrained vectors in the usual `word f1 f2 ...` text format.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WordVectors {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl WordVectors {
    pub fn empty(dim: usize) -> Self {
        WordVectors {
            dim,
            ..WordVectors::default()
        }
    }

    pub fn from_pairs(dim: usize, pairs: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut wv = WordVectors::empty(dim);
        for (w, v) in pairs {
            if v.len() != dim {
                return Err(SmarnetError::shape("word vector", &[dim], &[v.len()]));
            }
            if wv.index.contains_key(&w) {
                continue;
            }
            wv.index.insert(w.clone(), wv.words.len());
            wv.words.push(w);
            wv.data.extend(v);
        }
        Ok(wv)
    }

    /// Reads a whitespace-separated vector file. If `keep` is given, only
    /// words for which it returns true are retained.
    pub fn load(path: &Path, keep: Option<&dyn Fn(&str) -> bool>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut pairs = Vec::new();
        let mut dim = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vals: std::result::Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| {
                SmarnetError::data(format!("{}:{}", path.display(), n + 1), e.to_string())
            })?;
            match dim {
                None => dim = Some(vals.len()),
                Some(d) if d != vals.len() => {
                    return Err(SmarnetError::data(
                        format!("{}:{}", path.display(), n + 1),
                        format!("expected {d} values, found {}", vals.len()),
                    ))
                }
                _ => {}
            }
            if keep.is_none_or(|f| f(word)) {
                pairs.push((word.to_string(), vals));
            }
        }
        let dim = dim.ok_or_else(|| SmarnetError::data(path.display().to_string(), "no vectors"))?;
        WordVectors::from_pairs(dim, pairs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    /// Row of `word`, falling back to its lower-cased form.
    pub fn find(&self, word: &str) -> Option<usize> {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
    }

    pub fn vector(&self, row: usize) -> &[f64] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }
}

/// String-to-row map.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    items: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_items(items: Vec<String>) -> Self {
        let mut v = Vocab {
            items,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self.items.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    }

    pub fn get(&self, item: &str) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

/// FNV-1a, used to derive stable per-word seeds.
fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic vector for a word outside every table.
pub fn hashed_vector(word: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word) ^ seed.rotate_left(17));
    (0..dim).map(|_| rng.gen_range(-OOV_BOUND..=OOV_BOUND)).collect()
}

/// Where a token's word vector comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum WordSource {
    Pretrained(usize),
    Trainable(usize),
    Hashed(Vec<f64>),
}

/// Vocabularies backing the embedding layer. The trainable word rows and
/// the character table live in the [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTables {
    pub dim: usize,
    pub char_width: usize,
    pub seed: u64,
    pub pretrained: WordVectors,
    /// Lower-cased words without a pretrained vector, one trainable row each.
    pub oov: Vocab,
    /// Character rows start at 1; row 0 is the unknown character.
    pub chars: Vocab,
}

impl EmbeddingTables {
    /// Builds vocabularies from training tokens.
    pub fn build<'a>(
        dim: usize,
        char_width: usize,
        seed: u64,
        pretrained: WordVectors,
        tokens: impl IntoIterator<Item = &'a Token>,
    ) -> Result<Self> {
        if !pretrained.is_empty() && pretrained.dim() != dim {
            return Err(SmarnetError::shape("pretrained vectors", &[dim], &[pretrained.dim()]));
        }
        if char_width == 0 {
            return Err(SmarnetError::invalid("char filter width must be positive"));
        }
        let mut oov = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut chars = std::collections::BTreeSet::new();
        for t in tokens {
            chars.extend(t.text.chars());
            if pretrained.find(&t.text).is_none() && seen.insert(t.lower.clone()) {
                oov.push(t.lower.clone());
            }
        }
        oov.sort();
        Ok(EmbeddingTables {
            dim,
            char_width,
            seed,
            pretrained,
            oov: Vocab::from_items(oov),
            chars: Vocab::from_items(chars.into_iter().map(String::from).collect()),
        })
    }

    pub(crate) fn rebuild_indices(&mut self) {
        self.pretrained.rebuild_index();
        self.oov.rebuild_index();
        self.chars.rebuild_index();
    }

    pub fn source(&self, token: &Token) -> WordSource {
        if let Some(r) = self.pretrained.find(&token.text) {
            WordSource::Pretrained(r)
        } else if let Some(r) = self.oov.get(&token.lower) {
            WordSource::Trainable(r)
        } else {
            WordSource::Hashed(hashed_vector(&token.lower, self.seed, self.dim))
        }
    }

    /// Character rows of a token; unknown characters map to row 0.
    pub fn char_ids(&self, token: &Token) -> Vec<usize> {
        token
            .text
            .chars()
            .map(|c| {
                let mut buf = [0u8; 4];
                self.chars.get(c.encode_utf8(&mut buf)).map_or(0, |i| i + 1)
            })
            .collect()
    }

    /// Initial value of the trainable word rows: each word's hashed vector.
    pub fn initial_oov_table(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.oov.len() * self.dim);
        for w in self.oov.items() {
            data.extend(hashed_vector(w, self.seed, self.dim));
        }
        Tensor::new(vec![self.oov.len(), self.dim], data).expect("consistent table size")
    }
}

/// Parameter handles of the embedding layer.
#[derive(Clone, Copy, Debug)]
pub struct EmbeddingParams {
    pub oov: ParamId,
    pub chars: ParamId,
    pub cnn_w: ParamId,
    pub cnn_b: ParamId,
    pub gate_p_w: ParamId,
    pub gate_p_b: ParamId,
    pub gate_q_w: ParamId,
    pub gate_q_b: ParamId,
}

impl EmbeddingParams {
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        tables: &EmbeddingTables,
        passage_features: usize,
        question_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let d = tables.dim;
        let nc = tables.chars.len() + 1;
        let w = tables.char_width;
        Ok(EmbeddingParams {
            oov: store.ensure("emb.word_oov", &[tables.oov.len(), d], true, || {
                tables.initial_oov_table()
            })?,
            chars: store.ensure("emb.char", &[nc, d], true, || {
                Tensor::uniform(&[nc, d], OOV_BOUND, rng)
            })?,
            cnn_w: store.ensure("emb.cnn.w", &[d, w * d], true, || {
                Tensor::glorot(&[d, w * d], rng)
            })?,
            cnn_b: store.ensure("emb.cnn.b", &[d], true, || Tensor::zeros(&[d]))?,
            gate_p_w: store.ensure("gate.p.w", &[d, passage_features], true, || {
                Tensor::glorot(&[d, passage_features], rng)
            })?,
            gate_p_b: store.ensure("gate.p.b", &[d], true, || Tensor::zeros(&[d]))?,
            gate_q_w: store.ensure("gate.q.w", &[d, question_features], true, || {
                Tensor::glorot(&[d, question_features], rng)
            })?,
            gate_q_b: store.ensure("gate.q.b", &[d], true, || Tensor::zeros(&[d]))?,
        })
    }
}

/// Value of a token's word vector outside any graph.
pub fn lookup_word(tables: &EmbeddingTables, store: &ParamStore, p: &EmbeddingParams, token: &Token) -> Tensor {
    match tables.source(token) {
        WordSource::Pretrained(r) => Tensor::vector(tables.pretrained.vector(r).to_vec()),
        WordSource::Trainable(r) => Tensor::vector(store.get(p.oov).row(r).to_vec()),
        WordSource::Hashed(v) => Tensor::vector(v),
    }
}

/// Word vectors for a sequence as an `m x d` matrix.
pub fn word_matrix(
    g: &mut Graph,
    b: &Bound,
    p: &EmbeddingParams,
    tables: &EmbeddingTables,
    sources: &[WordSource],
) -> Result<Var> {
    let d = tables.dim;
    let mut fixed = Vec::with_capacity(sources.len() * d);
    let mut rows = Vec::with_capacity(sources.len());
    for s in sources {
        match s {
            WordSource::Pretrained(r) => {
                fixed.extend_from_slice(tables.pretrained.vector(*r));
                rows.push(None);
            }
            WordSource::Hashed(v) => {
                fixed.extend_from_slice(v);
                rows.push(None);
            }
            WordSource::Trainable(r) => {
                fixed.extend(std::iter::repeat_n(0.0, d));
                rows.push(Some(*r));
            }
        }
    }
    let trainable = g.gather_rows(b[p.oov], &rows)?;
    if rows.iter().all(Option::is_some) {
        return Ok(trainable);
    }
    let fixed = g.constant(Tensor::matrix(sources.len(), d, fixed)?);
    g.add(fixed, trainable)
}

/// Character CNN over one token: embed, zero-pad to the filter width,
/// convolve, `tanh`, max over positions. An empty token gives zeros.
pub fn char_encode(
    g: &mut Graph,
    char_table: Var,
    cnn_w: Var,
    cnn_b: Var,
    width: usize,
    char_ids: &[usize],
) -> Result<Var> {
    if char_ids.is_empty() {
        let d = g.shape(cnn_b)[0];
        return Ok(g.constant(Tensor::zeros(&[d])));
    }
    let mut idx: Vec<Option<usize>> = char_ids.iter().map(|&c| Some(c)).collect();
    while idx.len() < width {
        idx.push(None);
    }
    let x = g.gather_rows(char_table, &idx)?;
    let conv = g.conv1d(x, cnn_w, cnn_b, width)?;
    let act = g.tanh(conv);
    g.max_over_rows(act)
}

/// `σ(E_v W^T + b)`; `features` may be one vector or a matrix of rows.
pub fn lexical_gate(g: &mut Graph, features: Var, w: Var, b: Var) -> Result<Var> {
    let z = g.linear(features, w, Some(b))?;
    Ok(g.sigmoid(z))
}

/// `gate ∘ word + (1 - gate) ∘ chars`.
pub fn fuse(g: &mut Graph, word: Var, chars: Var, gate: Var) -> Result<Var> {
    if g.shape(word) != g.shape(chars) || g.shape(word) != g.shape(gate) {
        return Err(SmarnetError::shape("fuse", g.shape(word), g.shape(chars)));
    }
    let a = g.mul(gate, word)?;
    let inv = g.one_minus(gate);
    let c = g.mul(inv, chars)?;
    g.add(a, c)
}

/// Which side of the pair a sequence belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Passage,
    Question,
}

/// A tokenized text reduced to what the embedding layer consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingInput {
    pub sources: Vec<WordSource>,
    pub chars: Vec<Vec<usize>>,
    /// `m x F` lexical feature rows.
    pub features: Tensor,
}

impl EmbeddingInput {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }
}

/// Embeds a whole sequence: `m x (d + F)` rows `[h_i ; E_v,i]`, or
/// `[E_w ; E_c ; E_v]` when `concat` replaces the gate. Also returns the
/// gate values when a gate is used.
pub fn embed_sequence(
    g: &mut Graph,
    b: &Bound,
    p: &EmbeddingParams,
    tables: &EmbeddingTables,
    input: &EmbeddingInput,
    role: Role,
    concat: bool,
) -> Result<(Var, Option<Var>)> {
    if input.is_empty() {
        return Err(SmarnetError::invalid("cannot embed an empty sequence"));
    }
    let words = word_matrix(g, b, p, tables, &input.sources)?;
    let mut char_rows = Vec::with_capacity(input.len());
    for ids in &input.chars {
        char_rows.push(char_encode(g, b[p.chars], b[p.cnn_w], b[p.cnn_b], tables.char_width, ids)?);
    }
    let chars = g.stack_rows(&char_rows)?;
    let feats = g.constant(input.features.clone());
    if concat {
        return Ok((g.concat(&[words, chars, feats], 1)?, None));
    }
    let (w, bias) = match role {
        Role::Passage => (p.gate_p_w, p.gate_p_b),
        Role::Question => (p.gate_q_w, p.gate_q_b),
    };
    let gate = lexical_gate(g, feats, b[w], b[bias])?;
    let h = fuse(g, words, chars, gate)?;
    Ok((g.concat(&[h, feats], 1)?, Some(gate)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexical::tokenize;
    use crate::tensor::Graph;

    fn tables(words: &str, pretrained: WordVectors) -> EmbeddingTables {
        let toks = tokenize(words);
        EmbeddingTables::build(3, 2, 7, pretrained, toks.iter()).unwrap()
    }

    #[test]
    fn lookup_policy() {
        let pre = WordVectors::from_pairs(3, vec![("the".into(), vec![1.0, 2.0, 3.0])]).unwrap();
        let t = tables("The cat sat", pre);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = EmbeddingParams::register(&mut store, &t, 2, 2, &mut rng).unwrap();
        let toks = tokenize("The cat dog dog");
        // Lower-case fallback.
        assert_eq!(lookup_word(&t, &store, &p, &toks[0]).data(), &[1.0, 2.0, 3.0]);
        // Trainable row starts at the hashed vector.
        assert_eq!(
            lookup_word(&t, &store, &p, &toks[1]).data(),
            hashed_vector("cat", 7, 3).as_slice()
        );
        assert!(matches!(t.source(&toks[1]), WordSource::Trainable(_)));
        // Unseen word: stable.
        assert!(matches!(t.source(&toks[2]), WordSource::Hashed(_)));
        assert_eq!(
            lookup_word(&t, &store, &p, &toks[2]),
            lookup_word(&t, &store, &p, &toks[3])
        );
        assert_eq!(t.oov.items(), ["cat", "sat"]);
    }

    #[test]
    fn vector_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        std::fs::write(&path, "the 0.1 0.2\ncat -1 2.5\n\n").unwrap();
        let wv = WordVectors::load(&path, None).unwrap();
        assert_eq!((wv.dim(), wv.len()), (2, 2));
        assert_eq!(wv.vector(wv.find("cat").unwrap()), &[-1.0, 2.5]);
        let only_cat = WordVectors::load(&path, Some(&|w: &str| w == "cat")).unwrap();
        assert_eq!(only_cat.len(), 1);
        std::fs::write(&path, "a 1 2\nb 3\n").unwrap();
        let err = WordVectors::load(&path, None).unwrap_err();
        assert!(err.to_string().contains(":2"));
    }

    #[test]
    fn char_encode_single_position() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let table = g.leaf(Tensor::uniform(&[4, 3], 1.0, &mut rng), true);
        let w = g.leaf(Tensor::uniform(&[3, 9], 1.0, &mut rng), true);
        let b = g.leaf(Tensor::zeros(&[3]), true);
        let out = char_encode(&mut g, table, w, b, 3, &[2]).unwrap();
        assert_eq!(g.shape(out), &[3]);
        // One window: tanh(W[:, 0..3] · table[2]).
        let tv = g.value(table).row(2).to_vec();
        let wv = g.value(w).clone();
        for o in 0..3 {
            let z: f64 = (0..3).map(|c| wv.get(o, c) * tv[c]).sum();
            assert!((g.value(out).data()[o] - z.tanh()).abs() < 1e-12);
        }
        let empty = char_encode(&mut g, table, w, b, 3, &[]).unwrap();
        assert_eq!(g.value(empty).data(), &[0.0; 3]);
    }

    #[test]
    fn char_cnn_gradients_match_finite_differences() {
        let inputs = [
            crate::testutil::rand_t(&[5, 3], 1),
            crate::testutil::rand_t(&[3, 9], 2),
            crate::testutil::rand_t(&[3], 3),
        ];
        let err = crate::testutil::fd_max_rel_err(&inputs, |g, v| {
            char_encode(g, v[0], v[1], v[2], 3, &[4, 0, 2])
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn gate_limits_and_scalar_oracle() {
        let mut g = Graph::new();
        let f = g.constant(Tensor::vector(vec![0.3, -1.0]));
        let w0 = g.constant(Tensor::zeros(&[2, 2]));
        let b0 = g.constant(Tensor::zeros(&[2]));
        let half = lexical_gate(&mut g, f, w0, b0).unwrap();
        assert_eq!(g.value(half).data(), &[0.5, 0.5]);
        let b30 = g.constant(Tensor::full(&[2], 30.0));
        let sat = lexical_gate(&mut g, f, w0, b30).unwrap();
        assert!(g.value(sat).data().iter().all(|v| *v > 1.0 - 1e-9));

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let wt = Tensor::uniform(&[4, 5], 1.0, &mut rng);
        let bt = Tensor::uniform(&[4], 1.0, &mut rng);
        let ft = Tensor::uniform(&[5], 1.0, &mut rng);
        let (w, b, f) = (g.constant(wt.clone()), g.constant(bt.clone()), g.constant(ft.clone()));
        let gate = lexical_gate(&mut g, f, w, b).unwrap();
        for i in 0..4 {
            let mut z = bt.data()[i];
            for j in 0..5 {
                z += wt.get(i, j) * ft.data()[j];
            }
            let oracle = 1.0 / (1.0 + (-z).exp());
            assert!((g.value(gate).data()[i] - oracle).abs() < 1e-12);
        }
        let bad = g.constant(Tensor::zeros(&[3]));
        assert!(lexical_gate(&mut g, bad, w, b).is_err());
    }

    #[test]
    fn fuse_boundaries() {
        let mut g = Graph::new();
        let ew = g.constant(Tensor::vector(vec![2.0, 4.0]));
        let ec = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let ec2 = g.constant(Tensor::vector(vec![-1.5, 7.0]));
        for (gv, want) in [(1.0, vec![2.0, 4.0]), (0.0, vec![-1.5, 7.0])] {
            let gate = g.constant(Tensor::full(&[2], gv));
            let h = fuse(&mut g, ew, ec2, gate).unwrap();
            assert_eq!(g.value(h).data(), want.as_slice());
        }
        let gate = g.constant(Tensor::full(&[2], 0.5));
        let h = fuse(&mut g, ew, ec, gate).unwrap();
        assert_eq!(g.value(h).data(), &[1.0, 2.0]);
        let short = g.constant(Tensor::zeros(&[3]));
        assert!(fuse(&mut g, ew, short, gate).is_err());
    }

    #[test]
    fn fuse_partials() {
        let mut g = Graph::new();
        let ew = g.leaf(Tensor::vector(vec![0.2, -0.7]), true);
        let ec = g.leaf(Tensor::vector(vec![1.1, 0.4]), true);
        let gate = g.constant(Tensor::vector(vec![0.3, 0.9]));
        let h = fuse(&mut g, ew, ec, gate).unwrap();
        let s = g.sum(h);
        let grads = g.backward(s).unwrap();
        let dw = grads.get(ew).unwrap();
        let dc = grads.get(ec).unwrap();
        assert!((dw[0] - 0.3).abs() < 1e-15 && (dw[1] - 0.9).abs() < 1e-15);
        assert!((dc[0] - 0.7).abs() < 1e-15 && (dc[1] - 0.1).abs() < 1e-15);
    }

    fn input_for(t: &EmbeddingTables, text: &str, nf: usize) -> EmbeddingInput {
        let toks = tokenize(text);
        let rows: Vec<Vec<f64>> = (0..toks.len())
            .map(|i| (0..nf).map(|j| ((i * nf + j) % 3) as f64 * 0.5).collect())
            .collect();
        EmbeddingInput {
            sources: toks.iter().map(|x| t.source(x)).collect(),
            chars: toks.iter().map(|x| t.char_ids(x)).collect(),
            features: Tensor::from_rows(&rows).unwrap(),
        }
    }

    #[test]
    fn sequence_dims_and_feature_slice() {
        let t = tables("who saw the cat", WordVectors::empty(3));
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = EmbeddingParams::register(&mut store, &t, 22, 31, &mut rng).unwrap();
        let mut g = Graph::new();
        let b = store.bind(&mut g, true);
        let pin = input_for(&t, "the cat sat", 22);
        let qin = input_for(&t, "who saw it ?", 31);
        let ep = embed_sequence(&mut g, &b, &p, &t, &pin, Role::Passage, false).unwrap().0;
        let eq = embed_sequence(&mut g, &b, &p, &t, &qin, Role::Question, false).unwrap().0;
        assert_eq!(g.shape(ep), &[3, 25]);
        assert_eq!(g.shape(eq), &[4, 34]);
        for i in 0..3 {
            assert_eq!(&g.value(ep).row(i)[3..], pin.features.row(i));
        }
        let cat = embed_sequence(&mut g, &b, &p, &t, &pin, Role::Passage, true).unwrap().0;
        assert_eq!(g.shape(cat), &[3, 28]);
        let loss = g.sum_squares(cat);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(b[p.gate_p_w]).is_none());
        assert!(grads.get(b[p.cnn_w]).is_some());
    }

    #[test]
    fn hull_property() {
        use proptest::prelude::*;
        proptest!(|(w in proptest::collection::vec(-5.0f64..5.0, 4),
                    c in proptest::collection::vec(-5.0f64..5.0, 4),
                    z in proptest::collection::vec(-8.0f64..8.0, 4))| {
            let mut g = Graph::new();
            let ew = g.constant(Tensor::vector(w.clone()));
            let ec = g.constant(Tensor::vector(c.clone()));
            let zv = g.constant(Tensor::vector(z));
            let gate = g.sigmoid(zv);
            let h = fuse(&mut g, ew, ec, gate).unwrap();
            for i in 0..4 {
                let v = g.value(h).data()[i];
                prop_assert!(v >= w[i].min(c[i]) - 1e-12 && v <= w[i].max(c[i]) + 1e-12);
            }
        });
    }
}
