//! Rule lemmatizer: an irregular-form table plus suffix stripping for plural
//! `-s`/`-es`/`-ies` and verbal `-ing`/`-ed`, repairing doubled consonants.

use std::collections::HashMap;
use std::sync::OnceLock;

const IRREGULAR: &[(&str, &str)] = &[
    ("am", "be"), ("is", "be"), ("are", "be"), ("was", "be"), ("were", "be"), ("been", "be"),
    ("being", "be"), ("has", "have"), ("had", "have"), ("having", "have"), ("does", "do"),
    ("did", "do"), ("done", "do"), ("went", "go"), ("gone", "go"), ("made", "make"),
    ("said", "say"), ("got", "get"), ("gotten", "get"), ("took", "take"), ("taken", "take"),
    ("came", "come"), ("saw", "see"), ("seen", "see"), ("knew", "know"), ("known", "know"),
    ("gave", "give"), ("given", "give"), ("found", "find"), ("thought", "think"), ("told", "tell"),
    ("became", "become"), ("left", "leave"), ("felt", "feel"), ("brought", "bring"),
    ("began", "begin"), ("begun", "begin"), ("kept", "keep"), ("held", "hold"), ("wrote", "write"),
    ("written", "write"), ("stood", "stand"), ("heard", "hear"), ("meant", "mean"), ("met", "meet"),
    ("ran", "run"), ("paid", "pay"), ("sat", "sit"), ("spoke", "speak"), ("spoken", "speak"),
    ("led", "lead"), ("grew", "grow"), ("grown", "grow"), ("lost", "lose"), ("fell", "fall"),
    ("fallen", "fall"), ("sent", "send"), ("built", "build"), ("understood", "understand"),
    ("drew", "draw"), ("drawn", "draw"), ("broke", "break"), ("broken", "break"),
    ("spent", "spend"), ("rose", "rise"), ("risen", "rise"), ("drove", "drive"),
    ("driven", "drive"), ("bought", "buy"), ("wore", "wear"), ("worn", "wear"),
    ("chose", "choose"), ("chosen", "choose"), ("won", "win"), ("fought", "fight"),
    ("taught", "teach"), ("caught", "catch"), ("sold", "sell"), ("ate", "eat"), ("eaten", "eat"),
    ("flew", "fly"), ("flown", "fly"), ("threw", "throw"), ("thrown", "throw"),
    ("sang", "sing"), ("sung", "sing"), ("swam", "swim"), ("froze", "freeze"),
    ("frozen", "freeze"), ("hid", "hide"), ("hidden", "hide"), ("shook", "shake"),
    ("stole", "steal"), ("stolen", "steal"), ("struck", "strike"), ("laid", "lay"),
    ("lay", "lie"), ("lain", "lie"), ("sought", "seek"), ("dealt", "deal"), ("fed", "feed"),
    ("fled", "flee"), ("slept", "sleep"), ("wept", "weep"), ("bound", "bind"),
    ("men", "man"), ("women", "woman"), ("children", "child"), ("people", "person"),
    ("feet", "foot"), ("teeth", "tooth"), ("mice", "mouse"), ("geese", "goose"),
    ("lives", "life"), ("wives", "wife"), ("knives", "knife"), ("leaves", "leaf"),
    ("wolves", "wolf"), ("halves", "half"), ("indices", "index"), ("criteria", "criterion"),
    ("phenomena", "phenomenon"), ("analyses", "analysis"), ("theses", "thesis"),
    ("crises", "crisis"), ("better", "good"), ("best", "good"), ("worse", "bad"),
    ("worst", "bad"), ("its", "its"), ("this", "this"), ("his", "his"), ("was", "be"),
    ("news", "news"), ("species", "species"), ("series", "series"),
];

fn irregular() -> &'static HashMap<&'static str, &'static str> {
    static TABLE: OnceLock<HashMap<&'static str, &'static str>> = OnceLock::new();
    TABLE.get_or_init(|| IRREGULAR.iter().copied().collect())
}

/// True if `word` appears in the irregular table as an inflected verb form.
pub(crate) fn is_irregular_verb_form(word: &str) -> bool {
    const NOMINAL: &[&str] = &[
        "man", "woman", "child", "person", "foot", "tooth", "mouse", "goose", "life", "wife",
        "knife", "leaf", "wolf", "half", "index", "criterion", "phenomenon", "analysis",
        "thesis", "crisis", "good", "bad", "its", "this", "his", "news", "species", "series",
    ];
    irregular()
        .get(word)
        .is_some_and(|lemma| !NOMINAL.contains(lemma) && *lemma != word)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Undo consonant doubling (`runn` -> `run`) or restore a dropped `e`
/// (`mak` -> `make`) after removing `-ing`/`-ed`.
fn repair_stem(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n >= 3 {
        let (a, b) = (chars[n - 2], chars[n - 1]);
        if a == b && !is_vowel(b) && !matches!(b, 'l' | 's' | 'z') {
            return chars[..n - 1].iter().collect();
        }
    }
    if n == 3 && !is_vowel(chars[0]) && is_vowel(chars[1]) && !is_vowel(chars[2])
        && !matches!(chars[2], 'w' | 'x' | 'y')
    {
        return format!("{stem}e");
    }
    if n >= 2 && matches!(&stem[stem.len() - 2..], "iv" | "at" | "ur" | "uc" | "ag" | "ov") {
        return format!("{stem}e");
    }
    stem.to_string()
}

/// Lemma of a lower-cased word.
pub fn lemmatize(lower: &str) -> String {
    if let Some(l) = irregular().get(lower) {
        return (*l).to_string();
    }
    if !lower.chars().all(char::is_alphabetic) || lower.chars().count() <= 3 {
        return lower.to_string();
    }
    if let Some(stem) = lower.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = lower.strip_suffix("es") {
        if stem.ends_with("ch") || stem.ends_with("sh") || stem.ends_with('x') || stem.ends_with('z')
            || stem.ends_with("ss")
        {
            return stem.to_string();
        }
    }
    if lower.ends_with('s') && !lower.ends_with("ss") && !lower.ends_with("us") && !lower.ends_with("is") {
        return lower[..lower.len() - 1].to_string();
    }
    if let Some(stem) = lower.strip_suffix("ing") {
        if stem.len() >= 2 && stem.chars().any(is_vowel) {
            return repair_stem(stem);
        }
    }
    if let Some(stem) = lower.strip_suffix("ied") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = lower.strip_suffix("ed") {
        if stem.len() >= 2 && stem.chars().any(is_vowel) {
            if stem.ends_with('e') {
                return stem.to_string();
            }
            return repair_stem(stem);
        }
    }
    lower.to_string()
}
