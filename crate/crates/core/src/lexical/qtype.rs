use serde::{Deserialize, Serialize};

use super::{QType, Token};

/// Interrogative cue words for each question type. The list is
/// configurable; [`QTypeCues::default`] gives the stock table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTypeCues {
    pub entries: Vec<(QType, Vec<String>)>,
}

const BE_VERBS: &[&str] = &[
    "is", "are", "was", "were", "am", "be", "does", "do", "did", "can", "could", "will", "would",
    "should", "has", "have", "had", "may", "might", "must", "shall",
];

const OTHER_WH: &[&str] = &[
    "name", "whence", "whither", "wherein", "whereby", "whichever", "whatever", "whoever",
];

impl Default for QTypeCues {
    fn default() -> Self {
        let one = |q: QType, w: &str| (q, vec![w.to_string()]);
        let many = |q: QType, ws: &[&str]| (q, ws.iter().map(|w| w.to_string()).collect());
        QTypeCues {
            entries: vec![
                one(QType::What, "what"),
                one(QType::How, "how"),
                one(QType::Who, "who"),
                one(QType::When, "when"),
                one(QType::Which, "which"),
                one(QType::Where, "where"),
                one(QType::Why, "why"),
                one(QType::Whose, "whose"),
                one(QType::Whom, "whom"),
                many(QType::OtherWh, OTHER_WH),
            ],
        }
    }
}

impl QTypeCues {
    fn lookup(&self, lower: &str) -> Option<QType> {
        self.entries
            .iter()
            .find(|(_, words)| words.iter().any(|w| w == lower))
            .map(|(q, _)| *q)
    }
}

/// Question type from the first interrogative cue among the first two
/// tokens, then anywhere in the question. A leading auxiliary or form of
/// "be" marks a yes/no question.
pub fn question_type_with(tokens: &[Token], cues: &QTypeCues) -> QType {
    for t in tokens.iter().take(2) {
        if let Some(q) = cues.lookup(&t.lower) {
            return q;
        }
    }
    if tokens.first().is_some_and(|t| BE_VERBS.contains(&t.lower.as_str())) {
        return QType::BeVerb;
    }
    tokens
        .iter()
        .skip(2)
        .find_map(|t| cues.lookup(&t.lower))
        .unwrap_or(QType::Other)
}

pub fn question_type(tokens: &[Token]) -> QType {
    question_type_with(tokens, &QTypeCues::default())
}

/// Sets `qtype` on every question token and returns it.
pub fn assign_question_type(tokens: &mut [Token], cues: &QTypeCues) -> QType {
    let q = question_type_with(tokens, cues);
    for t in tokens.iter_mut() {
        t.qtype = Some(q);
    }
    q
}
