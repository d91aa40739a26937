use super::{lemma::lemmatize, Token};

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "vs", "etc", "inc", "corp", "ltd", "mt", "ft", "prof",
    "gen", "gov", "sen", "rep", "jan", "feb", "aug", "sept", "oct", "nov", "dec",
];

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Rule tokenizer. Splits on whitespace, then separates punctuation, keeping
/// word-internal periods (`U.S.`, `3.5`), digit-group commas (`1,000`) and
/// apostrophes (`don't`), and splitting the possessive clitic `'s`.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chunk_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                split_chunk(text, s, i, &mut tokens);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        split_chunk(text, s, text.len(), &mut tokens);
    }
    tokens
}

fn is_clitic_s(chars: &[(usize, char)], j: usize) -> bool {
    is_apostrophe(chars[j].1)
        && j + 1 < chars.len()
        && matches!(chars[j + 1].1, 's' | 'S')
        && (j + 2 == chars.len() || !chars[j + 2].1.is_alphanumeric())
}

fn split_chunk(text: &str, start: usize, end: usize, out: &mut Vec<Token>) {
    let chars: Vec<(usize, char)> = text[start..end]
        .char_indices()
        .map(|(i, c)| (start + i, c))
        .collect();
    let n = chars.len();
    let byte_at = |k: usize| if k < n { chars[k].0 } else { end };
    let mut i = 0;
    while i < n {
        let c = chars[i].1;
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < n {
                let cj = chars[j].1;
                let next_alnum = j + 1 < n && chars[j + 1].1.is_alphanumeric();
                let keep = if cj.is_alphanumeric() {
                    true
                } else if cj == '.' {
                    next_alnum
                } else if cj == ',' {
                    next_alnum && chars[j - 1].1.is_ascii_digit() && chars[j + 1].1.is_ascii_digit()
                } else if is_apostrophe(cj) {
                    next_alnum && !is_clitic_s(&chars, j)
                } else {
                    false
                };
                if !keep {
                    break;
                }
                j += 1;
            }
            if j < n && chars[j].1 == '.' {
                let word = &text[byte_at(i)..byte_at(j)];
                if is_abbreviation(word) {
                    j += 1;
                }
            }
            push(text, byte_at(i), byte_at(j), out);
            i = j;
        } else if i > 0 && is_clitic_s(&chars, i) {
            push(text, byte_at(i), byte_at(i + 2), out);
            i += 2;
        } else {
            push(text, byte_at(i), byte_at(i + 1), out);
            i += 1;
        }
    }
}

fn is_abbreviation(word: &str) -> bool {
    if word.contains('.') {
        return word
            .split('.')
            .all(|seg| seg.chars().count() == 1 && seg.chars().all(char::is_alphabetic));
    }
    ABBREVIATIONS.contains(&word.to_lowercase().as_str())
}

fn push(text: &str, s: usize, e: usize, out: &mut Vec<Token>) {
    let surface = &text[s..e];
    let lower = surface.to_lowercase();
    let lemma = lemmatize(&lower);
    out.push(Token {
        text: surface.to_string(),
        char_start: s,
        char_end: e,
        lower,
        lemma,
        ..Token::default()
    });
}
