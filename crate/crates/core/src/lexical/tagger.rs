//! Heuristic part-of-speech and named-entity tagging, with an optional
//! pre-annotated sidecar that overrides the heuristics.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lemma::is_irregular_verb_form;
use super::{Ner, Pos, Token};
use crate::error::{Result, SmarnetError};

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "that", "these", "those", "every", "each", "some", "any", "no",
    "all", "both", "either", "neither", "another", "such",
];
const PRONOUNS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them", "who", "whom",
    "whose", "which", "what", "my", "your", "his", "its", "our", "their", "mine", "yours",
    "hers", "ours", "theirs", "myself", "yourself", "himself", "herself", "itself", "ourselves",
    "themselves", "someone", "something", "anyone", "anything", "everyone", "everything",
    "nobody", "nothing",
];
const ADPOSITIONS: &[&str] = &[
    "of", "in", "on", "at", "by", "for", "with", "from", "into", "onto", "about", "over", "under",
    "after", "before", "between", "through", "during", "without", "within", "against", "among",
    "since", "until", "upon", "across", "behind", "beyond", "near", "toward", "towards", "via",
    "despite", "throughout", "around", "along", "above", "below", "beside", "inside", "outside",
];
const CONJUNCTIONS: &[&str] = &[
    "and", "or", "but", "nor", "yet", "because", "although", "though", "while", "if", "whether",
    "unless", "whereas",
];
const PARTICLES: &[&str] = &["to", "not", "n't", "'s", "\u{2019}s"];
const ADVERBS: &[&str] = &[
    "very", "also", "often", "never", "always", "too", "quite", "rather", "just", "still",
    "already", "soon", "here", "there", "now", "then", "when", "where", "how", "why", "however",
    "almost", "only", "even", "again", "ever", "once", "later", "sometimes", "perhaps", "away",
];
const VERBS: &[&str] = &[
    "be", "is", "are", "was", "were", "am", "been", "being", "have", "has", "had", "do", "does",
    "did", "can", "could", "will", "would", "shall", "should", "may", "might", "must", "won",
    "said", "became", "make", "take", "give", "win", "say", "get", "use", "call", "called",
];
const NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "twenty", "thirty", "forty", "fifty", "hundred", "thousand", "million", "billion",
];
const SYMBOLS: &[char] = &['$', '%', '&', '@', '#', '+', '=', '<', '>', '^', '~', '|', '*', '\u{20ac}', '\u{a3}'];

const LOCATIONS: &[&str] = &[
    "paris", "london", "berlin", "rome", "madrid", "tokyo", "beijing", "moscow", "denver",
    "chicago", "boston", "seattle", "york", "california", "texas", "florida", "france",
    "germany", "italy", "spain", "china", "japan", "india", "russia", "canada", "mexico",
    "brazil", "egypt", "england", "scotland", "ireland", "europe", "asia", "africa", "america",
    "australia", "antarctica", "nile", "amazon", "thames", "danube", "alps", "everest",
    "atlantic", "pacific", "mediterranean", "vienna", "athens", "cairo", "sydney", "toronto",
    "warsaw", "prague", "lisbon", "dublin", "oslo", "stockholm", "kyoto", "hangzhou",
    "zhejiang", "mars", "jupiter", "venus", "saturn", "greenland", "iceland", "peru", "chile",
    "kenya", "nepal", "tibet", "sahara", "andes", "himalayas", "arizona", "ohio", "hawaii",
];
const FIRST_NAMES: &[&str] = &[
    "john", "mary", "james", "robert", "michael", "william", "david", "richard", "joseph",
    "thomas", "charles", "elizabeth", "jennifer", "linda", "barbara", "susan", "jessica",
    "sarah", "karen", "nancy", "george", "edward", "henry", "peter", "paul", "mark", "anne",
    "marie", "albert", "isaac", "ada", "alan", "grace", "nikola", "ludwig", "wolfgang",
    "johann", "leonardo", "galileo", "napoleon", "abraham", "martin", "frederick", "victoria",
    "margaret", "louis", "emily", "jane", "alexander", "julius", "winston", "franklin", "rosa",
    "amelia", "neil", "charlotte", "maria", "carl", "ernest", "frida", "pablo", "vincent",
];
const TITLES: &[&str] = &[
    "mr", "mr.", "mrs", "mrs.", "ms", "ms.", "dr", "dr.", "president", "king", "queen",
    "prince", "princess", "sir", "lady", "lord", "general", "emperor", "pope", "saint",
    "professor", "prof.", "senator", "governor",
];
const ORG_CUES: &[&str] = &[
    "university", "college", "company", "corporation", "corp", "corp.", "inc", "inc.", "ltd",
    "ltd.", "association", "institute", "council", "committee", "party", "bank", "club",
    "agency", "organization", "foundation", "society", "museum", "league", "army", "navy",
    "broncos", "panthers", "academy", "school", "church", "ministry", "department", "union",
    "nasa", "nfl", "nba", "fbi", "cia", "un", "unesco", "ibm", "google", "microsoft", "bbc",
];
const NATIONALITIES: &[&str] = &[
    "american", "french", "german", "italian", "spanish", "chinese", "japanese", "indian",
    "russian", "canadian", "mexican", "brazilian", "egyptian", "english", "british", "irish",
    "scottish", "european", "asian", "african", "australian", "greek", "roman", "dutch",
    "swedish", "norwegian", "polish", "christian", "muslim", "jewish", "catholic", "protestant",
];

fn has(list: &[&str], w: &str) -> bool {
    list.contains(&w)
}

fn is_number(lower: &str) -> bool {
    let mut digits = false;
    for c in lower.chars() {
        if c.is_ascii_digit() {
            digits = true;
        } else if !matches!(c, '.' | ',' | 's') {
            return false;
        }
    }
    digits || has(NUMBER_WORDS, lower)
}

fn is_capitalized(text: &str) -> bool {
    text.chars().next().is_some_and(char::is_uppercase)
}

/// Rule-based coarse part-of-speech tag of a single token.
pub fn heuristic_pos(token: &Token) -> Pos {
    let w = token.lower.as_str();
    if !w.chars().any(char::is_alphanumeric) {
        return if w.chars().all(|c| SYMBOLS.contains(&c)) {
            Pos::X
        } else {
            Pos::Punct
        };
    }
    if is_number(w) {
        return Pos::Num;
    }
    if has(PARTICLES, w) {
        return Pos::Prt;
    }
    if has(DETERMINERS, w) {
        return Pos::Det;
    }
    if has(PRONOUNS, w) {
        return Pos::Pron;
    }
    if has(ADPOSITIONS, w) {
        return Pos::Adp;
    }
    if has(CONJUNCTIONS, w) {
        return Pos::Conj;
    }
    if has(ADVERBS, w) {
        return Pos::Adv;
    }
    if has(VERBS, w) || is_irregular_verb_form(w) {
        return Pos::Verb;
    }
    if is_capitalized(&token.text) {
        return Pos::Noun;
    }
    let len = w.chars().count();
    let suffix = |s: &str| w.ends_with(s) && len > s.len() + 2;
    if suffix("ly") {
        Pos::Adv
    } else if suffix("ing") || suffix("ed") || suffix("ize") || suffix("ise") || suffix("ify") {
        Pos::Verb
    } else if ["ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ish", "est"]
        .iter()
        .any(|s| suffix(s))
    {
        Pos::Adj
    } else {
        Pos::Noun
    }
}

/// Rule-based entity tags for a token sequence. Consecutive capitalised
/// tokens form a candidate run that is classified as a whole.
pub fn heuristic_ner(tokens: &[Token]) -> Vec<Ner> {
    let mut tags = vec![Ner::O; tokens.len()];
    let sentence_start = |i: usize| i == 0 || matches!(tokens[i - 1].text.as_str(), "." | "?" | "!" | "\"" | ":");
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if !is_capitalized(&t.text) || !t.text.chars().any(char::is_alphabetic) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < tokens.len() && is_capitalized(&tokens[j].text) && tokens[j].text.chars().any(char::is_alphabetic) {
            j += 1;
        }
        let run = &tokens[i..j];
        let words: Vec<&str> = run.iter().map(|t| t.lower.as_str()).collect();
        let initial = sentence_start(i);
        let tag = if words.iter().any(|w| has(ORG_CUES, w)) {
            Some(Ner::Org)
        } else if (has(TITLES, words[0]) && run.len() > 1) || has(FIRST_NAMES, words[0]) {
            Some(Ner::Per)
        } else if words.iter().any(|w| has(LOCATIONS, w)) {
            Some(Ner::Loc)
        } else if words.iter().any(|w| has(NATIONALITIES, w)) {
            Some(Ner::Misc)
        } else if !initial || run.len() > 1 {
            let closed = run.len() == 1 && heuristic_pos(&run[0]) != Pos::Noun;
            (!closed).then_some(Ner::Misc)
        } else {
            None
        };
        if let Some(tag) = tag {
            let from = if tag == Ner::Per && has(TITLES, words[0]) { i + 1 } else { i };
            for slot in &mut tags[from..j] {
                *slot = tag;
            }
        }
        i = j;
    }
    tags
}

/// One pre-annotated document of a sidecar file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocAnnotation {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub ner: Vec<String>,
    pub lemma: Vec<String>,
}

impl DocAnnotation {
    fn validate(&self) -> Result<()> {
        for len in [self.pos.len(), self.ner.len(), self.lemma.len()] {
            if len != self.tokens.len() {
                return Err(SmarnetError::SidecarLength {
                    tokens: self.tokens.len(),
                    annotations: len,
                });
            }
        }
        Ok(())
    }
}

/// Reads a JSON-lines sidecar, one [`DocAnnotation`] per line.
pub fn load_sidecar(path: &Path) -> Result<Vec<DocAnnotation>> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocAnnotation = serde_json::from_str(&line)
            .map_err(|e| SmarnetError::data(format!("{}:{}", path.display(), n + 1), e.to_string()))?;
        doc.validate()?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Fills `pos`/`ner` on every token, from `annotation` when given and from
/// the heuristics otherwise. Sidecar lemmas also replace the rule lemmas.
pub fn annotate_pos_ner(tokens: &mut [Token], annotation: Option<&DocAnnotation>) -> Result<()> {
    match annotation {
        Some(doc) => {
            doc.validate()?;
            if doc.tokens.len() != tokens.len() {
                return Err(SmarnetError::SidecarLength {
                    tokens: tokens.len(),
                    annotations: doc.tokens.len(),
                });
            }
            for (k, t) in tokens.iter_mut().enumerate() {
                t.pos = Some(Pos::from_tag(&doc.pos[k])?);
                t.ner = Some(Ner::from_tag(&doc.ner[k])?);
                t.lemma = doc.lemma[k].to_lowercase();
            }
        }
        None => {
            let ner = heuristic_ner(tokens);
            for (t, n) in tokens.iter_mut().zip(ner) {
                t.pos = Some(heuristic_pos(t));
                t.ner = Some(n);
            }
        }
    }
    Ok(())
}
