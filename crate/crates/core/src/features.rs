//! Vocabulary plus the two document representations: order-free TF-IDF
//! bags and order-preserving padded id sequences.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Ids below this are reserved; real tokens start here.
pub const FIRST_TOKEN_ID: usize = 2;

const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Dense token ↔ id map fitted on training documents.
///
/// Ids 0 and 1 are PAD and UNK (document frequency 0). The sparse
/// bag-of-token representations ignore them and index features from 0, so
/// feature `f` is vocabulary id `f + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyFile", into = "VocabularyFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    min_df: usize,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyFile {
    tokens: Vec<String>,
    doc_freq: Vec<usize>,
    n_docs: usize,
    min_df: usize,
}

impl TryFrom<VocabularyFile> for Vocabulary {
    type Error = String;

    fn try_from(f: VocabularyFile) -> std::result::Result<Self, String> {
        if f.tokens.len() != f.doc_freq.len() {
            return Err("tokens and doc_freq differ in length".into());
        }
        if f.tokens.get(PAD).map(String::as_str) != Some(PAD_TOKEN)
            || f.tokens.get(UNK).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err("vocabulary must start with <pad>, <unk>".into());
        }
        let index: HashMap<String, usize> = f.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != f.tokens.len() {
            return Err("duplicate tokens in vocabulary".into());
        }
        Ok(Vocabulary {
            tokens: f.tokens,
            doc_freq: f.doc_freq,
            n_docs: f.n_docs,
            min_df: f.min_df,
            index,
        })
    }
}

impl From<Vocabulary> for VocabularyFile {
    fn from(v: Vocabulary) -> Self {
        VocabularyFile {
            tokens: v.tokens,
            doc_freq: v.doc_freq,
            n_docs: v.n_docs,
            min_df: v.min_df,
        }
    }
}

impl Vocabulary {
    /// Fit on training documents only. Tokens seen in fewer than `min_df`
    /// documents are left out; the rest get ids in first-occurrence order.
    pub fn build<'a, I, S>(documents: I, min_df: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if min_df == 0 {
            return Err(Error::Config("min_df must be at least 1".into()));
        }
        let mut order: Vec<String> = Vec::new();
        let mut df: HashMap<String, (usize, usize)> = HashMap::new();
        let mut n_docs = 0;
        for (doc_no, doc) in documents.into_iter().enumerate() {
            n_docs += 1;
            for t in doc {
                let t = t.as_ref();
                match df.get_mut(t) {
                    Some((count, last)) => {
                        if *last != doc_no {
                            *count += 1;
                            *last = doc_no;
                        }
                    }
                    None => {
                        df.insert(t.to_string(), (1, doc_no));
                        order.push(t.to_string());
                    }
                }
            }
        }
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut doc_freq = vec![0, 0];
        for t in order {
            let d = df[&t].0;
            if d >= min_df {
                tokens.push(t);
                doc_freq.push(d);
            }
        }
        if tokens.len() == FIRST_TOKEN_ID {
            return Err(Error::EmptyVocabulary);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Self {
            tokens,
            doc_freq,
            n_docs,
            min_df,
            index,
        })
    }

    /// Total ids, reserved ones included.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= FIRST_TOKEN_ID
    }

    /// Width of the sparse feature space (real tokens only).
    pub fn n_features(&self) -> usize {
        self.tokens.len() - FIRST_TOKEN_ID
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn min_df(&self) -> usize {
        self.min_df
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().filter(|&i| i >= FIRST_TOKEN_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn doc_freq(&self, id: usize) -> usize {
        self.doc_freq[id]
    }

    /// Smoothed `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, id: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.doc_freq[id] as f64)).ln() + 1.0
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("vocabulary", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let path = path.as_ref();
        let json = self.to_json()?;
        std::fs::write(path, &json).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(json.as_bytes()))
    }

    /// Load a vocabulary file, returning it with the SHA-256 of its bytes.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let vocab = serde_json::from_slice(&bytes).map_err(|e| Error::json("vocabulary", e))?;
        Ok((vocab, sha256_hex(&bytes)))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Invalid("duplicate sparse index".into()));
        }
        if entries.iter().any(|e| !e.1.is_finite()) {
            return Err(Error::Invalid("non-finite sparse weight".into()));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|&(i, w)| (i, w * c)).collect(),
        }
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut d = vec![0.0; dim];
        for &(i, w) in &self.entries {
            d[i] = w;
        }
        d
    }
}

fn term_counts<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Vec<(usize, f64)> {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for t in tokens {
        if let Some(id) = vocab.id(t.as_ref()) {
            *counts.entry(id - FIRST_TOKEN_ID).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    entries
}

/// Raw in-vocabulary term counts (the multinomial naive Bayes input).
pub fn count_vector<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    SparseVector {
        entries: term_counts(tokens, vocab),
    }
}

/// `tf · idf` with raw-count tf, then L2-normalized. Out-of-vocabulary
/// tokens are skipped; if none remain the result is the zero vector.
pub fn tfidf_vector<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SparseVector {
    let mut entries = term_counts(tokens, vocab);
    for e in &mut entries {
        e.1 *= vocab.idf(e.0 + FIRST_TOKEN_ID);
    }
    let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    if norm > 0.0 {
        entries.iter_mut().for_each(|e| e.1 /= norm);
    }
    SparseVector { entries }
}

/// Fixed-length id sequence: right-padded with PAD, or cut after `max_len`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
    pub true_length: usize,
}

impl TokenSequence {
    /// The non-PAD prefix.
    pub fn active(&self) -> &[usize] {
        &self.ids[..self.true_length]
    }
}

pub fn encode_sequence<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    let mut ids: Vec<usize> = tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.id(t.as_ref()).unwrap_or(UNK))
        .collect();
    let true_length = ids.len();
    ids.resize(max_len, PAD);
    TokenSequence { ids, true_length }
}
