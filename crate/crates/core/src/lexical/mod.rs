//! Tokenization and the lexical features attached to every token: POS and
//! NER tags, term frequency, exact match, surprisal and question type.

mod lemma;
mod lm;
mod qtype;
mod tagger;
mod tokenize;

pub use lemma::lemmatize;
pub use lm::{train_lm, NGramLM, BOS, MAX_SURPRISAL};
pub use qtype::{assign_question_type, question_type, question_type_with, QTypeCues};
pub use tagger::{annotate_pos_ner, heuristic_ner, heuristic_pos, load_sidecar, DocAnnotation};
pub use tokenize::tokenize;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmarnetError};

macro_rules! tag_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $tag:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $tag),+ }
            }

            pub fn from_tag(tag: &str) -> Result<Self> {
                let up = tag.to_ascii_uppercase();
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == up)
                    .ok_or_else(|| SmarnetError::invalid(format!(
                        "unknown {} tag `{tag}`", stringify!($name)
                    )))
            }
        }
    };
}

tag_enum!(
    /// Universal coarse part-of-speech tags.
    Pos {
        Noun => "NOUN", Verb => "VERB", Adj => "ADJ", Adv => "ADV", Pron => "PRON",
        Det => "DET", Adp => "ADP", Num => "NUM", Conj => "CONJ", Prt => "PRT",
        Punct => "PUNCT", X => "X",
    }
);

tag_enum!(
    Ner { Per => "PER", Loc => "LOC", Org => "ORG", Misc => "MISC", O => "O" }
);

tag_enum!(
    QType {
        What => "WHAT", How => "HOW", Who => "WHO", When => "WHEN", Which => "WHICH",
        Where => "WHERE", Why => "WHY", Whose => "WHOSE", Whom => "WHOM",
        BeVerb => "BE", OtherWh => "OTHER_WH", Other => "OTHER",
    }
);

/// Passage feature width: pos 12, ner 5, tf 1, em 3, surprisal 1.
pub const PASSAGE_FEATURES: usize = 22;
/// Question feature width: pos 12, ner 5, tf 1, surprisal 1, qtype 12.
pub const QUESTION_FEATURES: usize = 31;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub lower: String,
    pub lemma: String,
    pub pos: Option<Pos>,
    pub ner: Option<Ner>,
    pub tf: Option<f64>,
    pub em: Option<[bool; 3]>,
    pub surprisal: Option<f64>,
    pub qtype: Option<QType>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Passage,
    Question,
}

/// Which feature blocks are live. A disabled block is zeroed, keeping the
/// vector width unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureMask {
    pub pos: bool,
    pub ner: bool,
    pub tf: bool,
    pub em: bool,
    pub surprisal: bool,
    pub qtype: bool,
}

impl Default for FeatureMask {
    fn default() -> Self {
        FeatureMask::all()
    }
}

impl FeatureMask {
    pub fn all() -> Self {
        FeatureMask {
            pos: true,
            ner: true,
            tf: true,
            em: true,
            surprisal: true,
            qtype: true,
        }
    }

    pub fn none() -> Self {
        FeatureMask {
            pos: false,
            ner: false,
            tf: false,
            em: false,
            surprisal: false,
            qtype: false,
        }
    }
}

/// Case-folded relative frequency of each token within `tokens`.
pub fn term_frequency(tokens: &[Token]) -> Vec<f64> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.lower.as_str()).or_insert(0) += 1;
    }
    let n = tokens.len() as f64;
    tokens.iter().map(|t| counts[t.lower.as_str()] as f64 / n).collect()
}

/// Surface, lower-case and lemma match flags of each passage token against
/// the question.
pub fn exact_match(passage: &[Token], question: &[Token]) -> Vec<[bool; 3]> {
    let surface: HashSet<&str> = question.iter().map(|t| t.text.as_str()).collect();
    let lower: HashSet<&str> = question.iter().map(|t| t.lower.as_str()).collect();
    let lemma: HashSet<&str> = question.iter().map(|t| t.lemma.as_str()).collect();
    passage
        .iter()
        .map(|t| {
            [
                surface.contains(t.text.as_str()),
                lower.contains(t.lower.as_str()),
                lemma.contains(t.lemma.as_str()),
            ]
        })
        .collect()
}

/// Writes surprisal from `lm` into the tokens, conditioning on the preceding
/// words of the same document.
pub fn assign_surprisal(tokens: &mut [Token], lm: &NGramLM) -> Result<()> {
    let words: Vec<&str> = tokens.iter().map(|t| t.lower.as_str()).collect();
    let s = lm.surprisal(&words)?;
    for (t, v) in tokens.iter_mut().zip(s) {
        t.surprisal = Some(v);
    }
    Ok(())
}

/// Runs every annotator over a passage and its question.
pub fn annotate_pair(
    passage: &mut [Token],
    question: &mut [Token],
    lm: &NGramLM,
    passage_sidecar: Option<&DocAnnotation>,
    question_sidecar: Option<&DocAnnotation>,
    cues: &QTypeCues,
) -> Result<()> {
    annotate_pos_ner(passage, passage_sidecar)?;
    annotate_pos_ner(question, question_sidecar)?;
    let tf_p = term_frequency(passage);
    let tf_q = term_frequency(question);
    let em = exact_match(passage, question);
    for ((t, f), em) in passage.iter_mut().zip(tf_p).zip(em) {
        t.tf = Some(f);
        t.em = Some(em);
    }
    for (t, f) in question.iter_mut().zip(tf_q) {
        t.tf = Some(f);
    }
    assign_surprisal(passage, lm)?;
    assign_surprisal(question, lm)?;
    assign_question_type(question, cues);
    Ok(())
}

fn one_hot(out: &mut Vec<f64>, index: usize, width: usize, on: bool) {
    let start = out.len();
    out.resize(start + width, 0.0);
    if on {
        out[start + index] = 1.0;
    }
}

pub fn build_feature_vector(token: &Token, side: Side) -> Result<Vec<f64>> {
    build_feature_vector_masked(token, side, &FeatureMask::all())
}

pub fn build_feature_vector_masked(token: &Token, side: Side, mask: &FeatureMask) -> Result<Vec<f64>> {
    let pos = token.pos.ok_or(SmarnetError::MissingFeature("pos"))?;
    let ner = token.ner.ok_or(SmarnetError::MissingFeature("ner"))?;
    let tf = token.tf.ok_or(SmarnetError::MissingFeature("tf"))?;
    let surprisal = token.surprisal.ok_or(SmarnetError::MissingFeature("surprisal"))?;
    let width = match side {
        Side::Passage => PASSAGE_FEATURES,
        Side::Question => QUESTION_FEATURES,
    };
    let mut v = Vec::with_capacity(width);
    one_hot(&mut v, pos.index(), Pos::COUNT, mask.pos);
    one_hot(&mut v, ner.index(), Ner::COUNT, mask.ner);
    v.push(if mask.tf { tf } else { 0.0 });
    match side {
        Side::Passage => {
            let em = token.em.ok_or(SmarnetError::MissingFeature("em"))?;
            for flag in em {
                v.push(if mask.em && flag { 1.0 } else { 0.0 });
            }
            v.push(if mask.surprisal { surprisal / MAX_SURPRISAL } else { 0.0 });
        }
        Side::Question => {
            let q = token.qtype.ok_or(SmarnetError::MissingFeature("qtype"))?;
            v.push(if mask.surprisal { surprisal / MAX_SURPRISAL } else { 0.0 });
            one_hot(&mut v, q.index(), QType::COUNT, mask.qtype);
        }
    }
    debug_assert_eq!(v.len(), width);
    Ok(v)
}
