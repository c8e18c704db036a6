//! Token cleaning and lemmatization. Token order is never changed; tokens
//! that clean down to nothing are dropped in place.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, RecipeRecord};
use crate::error::{Error, Result};

const BUNDLED_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharClass {
    Digits,
    Punctuation,
    Symbols,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub lowercase: bool,
    pub strip: Vec<CharClass>,
    pub lemmatize: bool,
    /// Replaces the bundled exception dictionary when set.
    pub exceptions: Option<PathBuf>,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip: vec![CharClass::Digits, CharClass::Punctuation, CharClass::Symbols],
            lemmatize: true,
            exceptions: None,
        }
    }
}

fn char_class(c: char) -> Option<CharClass> {
    if c.is_alphabetic() || c.is_whitespace() || c == '-' {
        None
    } else if c.is_numeric() {
        Some(CharClass::Digits)
    } else if c.is_ascii_punctuation() || ('\u{2000}'..='\u{206f}').contains(&c) || "¡¿«»".contains(c) {
        Some(CharClass::Punctuation)
    } else {
        Some(CharClass::Symbols)
    }
}

/// Strip the configured character classes, lowercase, and normalize
/// separators to single internal spaces or hyphens. `None` when nothing is
/// left.
pub fn clean_token(raw: &str, config: &CleaningConfig) -> Option<String> {
    let mut kept = String::with_capacity(raw.len());
    let chars: Box<dyn Iterator<Item = char>> = if config.lowercase {
        Box::new(raw.chars().flat_map(char::to_lowercase))
    } else {
        Box::new(raw.chars())
    };
    for c in chars {
        if c.is_control() && !c.is_whitespace() {
            continue;
        }
        match char_class(c) {
            Some(class) if config.strip.contains(&class) => continue,
            _ => {}
        }
        kept.push(if c.is_whitespace() { ' ' } else { c });
    }

    // Collapse separator runs. A run containing a space becomes one space,
    // a pure hyphen run becomes one hyphen; leading/trailing runs vanish.
    let mut out = String::with_capacity(kept.len());
    let mut pending: Option<char> = None;
    for c in kept.chars() {
        if c == ' ' || c == '-' {
            pending = match (pending, c) {
                (Some(' '), _) | (_, ' ') => Some(' '),
                _ => Some('-'),
            };
        } else {
            if let Some(sep) = pending.take() {
                if !out.is_empty() {
                    out.push(sep);
                }
            }
            out.push(c);
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Suffix-rule lemmatizer with an exception dictionary. Only the last word
/// of a composite token (after the final space or hyphen) is changed.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
    lemmas: HashSet<String>,
}

impl Lemmatizer {
    pub fn bundled() -> &'static Lemmatizer {
        static BUNDLED: OnceLock<Lemmatizer> = OnceLock::new();
        BUNDLED.get_or_init(|| Lemmatizer::from_tsv(BUNDLED_EXCEPTIONS).expect("bundled lemma table parses"))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    /// `inflected<TAB>lemma` per line; blank lines and `#` comments skipped.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut exceptions = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (inflected, lemma) = line.split_once('\t').ok_or_else(|| Error::Row {
                line: i + 1,
                message: "expected `inflected<TAB>lemma`".into(),
            })?;
            exceptions.insert(inflected.trim().to_string(), lemma.trim().to_string());
        }
        let lemmas = exceptions.values().cloned().collect();
        Ok(Self { exceptions, lemmas })
    }

    pub fn lemmatize(&self, token: &str) -> String {
        let cut = token.rfind([' ', '-']).map_or(0, |i| i + 1);
        let (head, last) = token.split_at(cut);
        let mut out = String::with_capacity(token.len());
        out.push_str(head);
        out.push_str(&self.lemmatize_word(last));
        out
    }

    fn lemmatize_word(&self, word: &str) -> String {
        if let Some(l) = self.exceptions.get(word) {
            return l.clone();
        }
        if self.lemmas.contains(word) {
            return word.to_string();
        }
        // A rewrite is only accepted when its output is itself a fixed point,
        // which makes the whole mapping idempotent.
        let candidate = apply_suffix_rules(word);
        if candidate != word && !self.lemmas.contains(&candidate) && apply_suffix_rules(&candidate) != candidate {
            return word.to_string();
        }
        candidate
    }
}

/// Lemmatize with the bundled table.
pub fn lemmatize(token: &str) -> String {
    Lemmatizer::bundled().lemmatize(token)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn valid_stem(stem: &[char]) -> bool {
    stem.len() >= 3 && stem.iter().any(|&c| is_vowel(c) || c == 'y')
}

fn apply_suffix_rules(word: &str) -> String {
    let w: Vec<char> = word.chars().collect();
    let n = w.len();
    if n <= 3 {
        return word.to_string();
    }
    let ends = |s: &str| word.ends_with(s);
    let stem = |k: usize| -> Vec<char> { w[..n - k].to_vec() };
    let s = |v: &[char]| v.iter().collect::<String>();

    if ends("ies") || ends("ied") {
        let st = stem(3);
        if st.len() >= 2 {
            return s(&st) + "y";
        }
        return word.to_string();
    }
    if ends("oes") || ends("sses") || ends("ches") || ends("shes") || ends("xes") || ends("zes") {
        return s(&stem(2));
    }
    if ends("ss") || ends("us") {
        return word.to_string();
    }
    if ends("s") {
        let st = stem(1);
        return if valid_stem(&st) { s(&st) } else { word.to_string() };
    }
    if ends("eed") {
        return word.to_string();
    }
    for suffix in ["ing", "ed"] {
        if ends(suffix) {
            let st = stem(suffix.chars().count());
            if !valid_stem(&st) {
                return word.to_string();
            }
            return s(&restore_stem(st));
        }
    }
    word.to_string()
}

/// Undo consonant doubling (`stirr` → `stir`) or restore a dropped final
/// `e` (`slic` → `slice`, `grat` → `grate`).
fn restore_stem(mut st: Vec<char>) -> Vec<char> {
    let n = st.len();
    let last = st[n - 1];
    let prev = st[n - 2];
    if last == prev {
        if "bdgmnprt".contains(last) && n > 3 {
            st.pop();
        }
        return st;
    }
    let consonant = |c: char| c.is_alphabetic() && !is_vowel(c);
    let add_e = match last {
        'c' | 'v' | 'z' | 'u' => true,
        's' => true,
        'l' => "bcdfgkptz".contains(prev),
        't' if prev == 'a' => n >= 3 && consonant(st[n - 3]),
        _ => {
            n <= 4
                && consonant(last)
                && !"wxy".contains(last)
                && is_vowel(prev)
                && consonant(st[n - 3])
        }
    };
    if add_e {
        st.push('e');
    }
    st
}

/// Cleans, then optionally lemmatizes, each token of a sequence.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    config: CleaningConfig,
    lemmatizer: Option<Lemmatizer>,
}

impl Preprocessor {
    pub fn new(config: CleaningConfig) -> Result<Self> {
        let lemmatizer = match &config.exceptions {
            Some(p) => Some(Lemmatizer::from_file(p)?),
            None => None,
        };
        Ok(Self { config, lemmatizer })
    }

    pub fn config(&self) -> &CleaningConfig {
        &self.config
    }

    pub fn token(&self, raw: &str) -> Option<String> {
        let clean = clean_token(raw, &self.config)?;
        if !self.config.lemmatize {
            return Some(clean);
        }
        let lem = self.lemmatizer.as_ref().unwrap_or_else(|| Lemmatizer::bundled());
        Some(lem.lemmatize(&clean))
    }

    pub fn tokens<S: AsRef<str>>(&self, raw: &[S]) -> Vec<String> {
        raw.iter().filter_map(|t| self.token(t.as_ref())).collect()
    }
}

/// Clean every record in parallel (order preserved). Records left without
/// tokens are dropped with a warning; the label list is kept as is.
pub fn preprocess_corpus(corpus: &LabeledCorpus, config: &CleaningConfig) -> Result<LabeledCorpus> {
    let pre = Preprocessor::new(config.clone())?;
    let processed: Vec<Option<RecipeRecord>> = corpus
        .records()
        .par_iter()
        .map(|r| {
            let tokens = pre.tokens(&r.tokens);
            (!tokens.is_empty()).then(|| RecipeRecord {
                tokens,
                ..r.clone()
            })
        })
        .collect();
    let mut kept = Vec::with_capacity(processed.len());
    for (r, p) in corpus.records().iter().zip(processed) {
        match p {
            Some(p) => kept.push(p),
            None => log::warn!("record {} has no tokens left after preprocessing; dropped", r.id),
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyAfterPreprocessing);
    }
    LabeledCorpus::with_labels(kept, corpus.labels().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clean(s: &str) -> Option<String> {
        clean_token(s, &CleaningConfig::default())
    }

    #[test]
    fn cleaning_examples() {
        assert_eq!(clean("Red Lentil2").as_deref(), Some("red lentil"));
        assert_eq!(clean("123"), None);
        assert_eq!(clean("olive oil").as_deref(), Some("olive oil"));
        assert_eq!(clean("  Stir!! ").as_deref(), Some("stir"));
        assert_eq!(clean("half -- and - half").as_deref(), Some("half and half"));
        assert_eq!(clean("stir--fry").as_deref(), Some("stir-fry"));
        assert_eq!(clean("-jalapeño-").as_deref(), Some("jalapeño"));
        assert_eq!(clean("½ cup"), Some("cup".into()));
        assert_eq!(clean("salt & pepper").as_deref(), Some("salt pepper"));
    }

    #[test]
    fn strip_classes_are_configurable() {
        let cfg = CleaningConfig {
            strip: vec![CharClass::Punctuation],
            lowercase: false,
            ..Default::default()
        };
        assert_eq!(clean_token("Egg 2!", &cfg).as_deref(), Some("Egg 2"));
    }

    #[test]
    fn lemma_basics() {
        assert_eq!(lemmatize("tomatoes"), "tomato");
        assert_eq!(lemmatize("stir"), "stir");
        assert_eq!(lemmatize("red lentils"), "red lentil");
        assert_eq!(lemmatize("stir-fried"), "stir-fry");
        assert_eq!(lemmatize("olive oil"), "olive oil");
    }

    // Each pair was derived by applying the rules (or the exception table)
    // to the inflected form by hand.
    const FIXTURE: &[(&str, &str)] = &[
        ("tomatoes", "tomato"),
        ("potatoes", "potato"),
        ("onions", "onion"),
        ("eggs", "egg"),
        ("peas", "pea"),
        ("berries", "berry"),
        ("anchovies", "anchovy"),
        ("cookies", "cookie"),
        ("peaches", "peach"),
        ("radishes", "radish"),
        ("boxes", "box"),
        ("glasses", "glass"),
        ("olives", "olive"),
        ("spices", "spice"),
        ("leaves", "leaf"),
        ("molasses", "molasses"),
        ("asparagus", "asparagus"),
        ("turkeys", "turkey"),
        ("stirring", "stir"),
        ("chopping", "chop"),
        ("cutting", "cut"),
        ("baking", "bake"),
        ("slicing", "slice"),
        ("mincing", "mince"),
        ("grating", "grate"),
        ("serving", "serve"),
        ("heating", "heat"),
        ("boiling", "boil"),
        ("rolling", "roll"),
        ("simmering", "simmer"),
        ("marinating", "marinate"),
        ("mixing", "mix"),
        ("pudding", "pudding"),
        ("icing", "icing"),
        ("string", "string"),
        ("chopped", "chop"),
        ("stirred", "stir"),
        ("diced", "dice"),
        ("baked", "bake"),
        ("cubed", "cube"),
        ("smoked", "smoke"),
        ("halved", "halve"),
        ("greased", "grease"),
        ("crumbled", "crumble"),
        ("sprinkled", "sprinkle"),
        ("added", "add"),
        ("canned", "can"),
        ("seeded", "seed"),
        ("dried", "dry"),
        ("sauteed", "saute"),
    ];

    #[test]
    fn fixture_of_fifty_pairs() {
        assert_eq!(FIXTURE.len(), 50);
        for &(inflected, lemma) in FIXTURE {
            assert_eq!(lemmatize(inflected), lemma, "{inflected}");
            assert_eq!(lemmatize(lemma), lemma, "lemma {lemma} must be a fixed point");
        }
    }

    #[test]
    fn bad_exception_file_line_is_reported() {
        let err = Lemmatizer::from_tsv("good\tok\nbroken line\n").unwrap_err();
        assert!(matches!(err, Error::Row { line: 2, .. }));
    }

    fn rec(id: i64, toks: &[&str]) -> RecipeRecord {
        RecipeRecord {
            id,
            continent: "Asian".into(),
            cuisine: "Indian Subcontinent".into(),
            tokens: toks.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn corpus_cleaning_examples() {
        let c = LabeledCorpus::from_records(vec![
            rec(1, &["Coconut Milk", "stir!!", "42"]),
            rec(4153, &["coconut milk", "milk", "white sugar", "basmati rice", "stir", "cook", "saucepan", "bowl"]),
            rec(7, &["99", "%%"]),
        ])
        .unwrap();
        let out = preprocess_corpus(&c, &CleaningConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.records()[0].tokens, ["coconut milk", "stir"]);
        assert_eq!(out.records()[1].tokens, c.records()[1].tokens);
        assert_eq!(out.labels(), c.labels());
        let again = preprocess_corpus(&out, &CleaningConfig::default()).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn all_dropped_is_fatal() {
        let c = LabeledCorpus::from_records(vec![rec(1, &["1", "2"])]).unwrap();
        assert!(matches!(
            preprocess_corpus(&c, &CleaningConfig::default()),
            Err(Error::EmptyAfterPreprocessing)
        ));
    }

    proptest! {
        #[test]
        fn lemmatize_is_idempotent(w in "[a-z]{1,12}( [a-z]{1,10})?") {
            let once = lemmatize(&w);
            prop_assert_eq!(lemmatize(&once), once);
        }

        #[test]
        fn cleaned_tokens_use_allowed_alphabet(raw in "\\PC{0,24}") {
            if let Some(t) = clean(&raw) {
                prop_assert!(!t.starts_with([' ', '-']) && !t.ends_with([' ', '-']));
                prop_assert!(!t.contains("  ") && !t.contains("--") && !t.contains(" -") && !t.contains("- "));
                prop_assert!(t.chars().all(|c| c == ' ' || c == '-' || c.is_alphabetic()));
                prop_assert_eq!(t.to_lowercase(), t.clone());
                prop_assert_eq!(clean(&t), Some(t.clone()));
            }
        }

        #[test]
        fn token_order_is_preserved(raw in proptest::collection::vec("[A-Za-z0-9!]{1,8}", 1..12)) {
            let pre = Preprocessor::new(CleaningConfig { lemmatize: false, ..Default::default() }).unwrap();
            let out = pre.tokens(&raw);
            let expected: Vec<String> = raw.iter().filter_map(|t| clean(t)).collect();
            prop_assert_eq!(out, expected);
        }
    }
}
