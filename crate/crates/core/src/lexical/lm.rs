//! Add-k smoothed n-gram language model used for the surprisal feature.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmarnetError};

pub const BOS: &str = "<s>";

/// Surprisal values are clipped to `[0, MAX_SURPRISAL]` nats.
pub const MAX_SURPRISAL: f64 = 20.0;

/// n-gram counts over lower-cased words. `counts[n-1]` holds the n-grams of
/// length `n`, keyed by the words joined with single spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NGramLM {
    order: usize,
    k: f64,
    counts: Vec<BTreeMap<String, u64>>,
    #[serde(skip)]
    contexts: HashMap<String, u64>,
    #[serde(skip)]
    vocab_size: usize,
}

impl NGramLM {
    pub fn new(order: usize, k: f64) -> Result<Self> {
        if order == 0 {
            return Err(SmarnetError::invalid("n-gram order must be at least 1"));
        }
        if !(k >= 0.0) {
            return Err(SmarnetError::invalid(format!("smoothing constant {k} must be >= 0")));
        }
        Ok(NGramLM {
            order,
            k,
            counts: vec![BTreeMap::new(); order],
            contexts: HashMap::new(),
            vocab_size: 0,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Number of distinct training words (excluding the unknown word).
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn is_trained(&self) -> bool {
        self.vocab_size > 0
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.counts[0].keys().map(String::as_str)
    }

    /// Adds one document's words (already lower-cased) to the counts.
    pub fn observe(&mut self, words: &[&str]) {
        self.add_counts(words);
        self.reindex();
    }

    fn add_counts(&mut self, words: &[&str]) {
        let padded: Vec<&str> = std::iter::repeat_n(BOS, self.order - 1)
            .chain(words.iter().copied())
            .collect();
        for t in 0..words.len() {
            let end = t + self.order;
            for n in 1..=self.order {
                let gram = padded[end - n..end].join(" ");
                *self.counts[n - 1].entry(gram).or_insert(0) += 1;
            }
        }
    }

    fn reindex(&mut self) {
        self.vocab_size = self.counts[0].len();
        self.contexts.clear();
        let total: u64 = self.counts[0].values().sum();
        self.contexts.insert(String::new(), total);
        for grams in &self.counts[1..] {
            for (gram, c) in grams {
                let ctx = gram.rsplit_once(' ').map_or("", |(h, _)| h);
                *self.contexts.entry(ctx.to_string()).or_insert(0) += c;
            }
        }
    }

    fn count(&self, gram: &str, n: usize) -> u64 {
        self.counts[n - 1].get(gram).copied().unwrap_or(0)
    }

    /// `P(word | history)` using the last `order - 1` history words. A
    /// context never seen in training backs off to the next shorter one.
    pub fn prob(&self, word: &str, history: &[&str]) -> Result<f64> {
        if !self.is_trained() {
            return Err(SmarnetError::UntrainedModel);
        }
        let need = self.order - 1;
        let mut ctx: Vec<&str> = history.iter().rev().take(need).rev().copied().collect();
        while ctx.len() < need {
            ctx.insert(0, BOS);
        }
        let denom_vocab = (self.vocab_size + 1) as f64;
        loop {
            let key = ctx.join(" ");
            let c_ctx = self.contexts.get(&key).copied().unwrap_or(0);
            if c_ctx > 0 || ctx.is_empty() {
                let gram = if key.is_empty() {
                    word.to_string()
                } else {
                    format!("{key} {word}")
                };
                let c = self.count(&gram, ctx.len() + 1) as f64;
                return Ok((c + self.k) / (c_ctx as f64 + self.k * denom_vocab));
            }
            ctx.remove(0);
        }
    }

    /// Per-token surprisal `-ln P(w_t | w_<t)` in nats, clipped to
    /// `[0, MAX_SURPRISAL]`. History is the preceding words of the document.
    pub fn surprisal(&self, words: &[&str]) -> Result<Vec<f64>> {
        (0..words.len())
            .map(|t| {
                let p = self.prob(words[t], &words[..t])?;
                Ok(if p > 0.0 {
                    (-p.ln()).clamp(0.0, MAX_SURPRISAL)
                } else {
                    MAX_SURPRISAL
                })
            })
            .collect()
    }

    /// Plain-text form: `#order`/`#k` header lines, then one sorted
    /// `ngram<TAB>count` line per n-gram.
    pub fn to_text(&self) -> String {
        let mut out = format!("#order\t{}\n#k\t{}\n", self.order, self.k);
        let mut lines: Vec<(&String, &u64)> = self.counts.iter().flat_map(|m| m.iter()).collect();
        lines.sort();
        for (gram, c) in lines {
            out.push_str(&format!("{gram}\t{c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut order = None;
        let mut k = None;
        let mut grams = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('\t')
                .ok_or_else(|| SmarnetError::data(format!("lm line {}", n + 1), "expected a tab"))?;
            let bad = |e: String| SmarnetError::data(format!("lm line {}", n + 1), e);
            match key {
                "#order" => order = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "#k" => k = Some(val.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => grams.push((key.to_string(), val.parse::<u64>().map_err(|e| bad(e.to_string()))?)),
            }
        }
        let order = order.ok_or_else(|| SmarnetError::data("lm", "missing #order"))?;
        let k = k.ok_or_else(|| SmarnetError::data("lm", "missing #k"))?;
        let mut lm = NGramLM::new(order, k)?;
        for (gram, c) in grams {
            let n = gram.split(' ').count();
            if n > order {
                return Err(SmarnetError::data("lm", format!("{n}-gram in an order-{order} model")));
            }
            lm.counts[n - 1].insert(gram, c);
        }
        lm.reindex();
        Ok(lm)
    }
}

/// Trains an order-`order` model with add-`k` smoothing on lower-cased
/// documents.
pub fn train_lm<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, k: f64) -> Result<NGramLM> {
    let mut lm = NGramLM::new(order, k)?;
    if corpus.iter().all(Vec::is_empty) {
        return Err(SmarnetError::invalid("language model corpus is empty"));
    }
    for doc in corpus {
        let words: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        lm.add_counts(&words);
    }
    lm.reindex();
    Ok(lm)
}
