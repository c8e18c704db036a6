//! Fitted classifiers behind one interface, their on-disk container, and the
//! train/evaluate pipeline shared by the command line and the C API.

use std::fmt;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FeatureConfig};
use crate::corpus::{DataSplit, LabeledCorpus};
use crate::error::{Error, Result};
use crate::features::{count_vector, encode_sequence, sha256_hex, tfidf_vector, SparseVector, TokenSequence, Vocabulary};
use crate::linear_models::{adaboost_fit, ensemble_predict, logreg_fit, nb_fit, rf_fit, svm_fit, LinearModel, NaiveBayesModel, TreeEnsemble};
use crate::metrics::{confusion, summarize, MetricsReport};
use crate::numeric::{cross_entropy, softmax};
use crate::preprocess::Preprocessor;
use crate::seq_models::{self, EpochRecord, SeqKind, SeqModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nb,
    #[default]
    Logreg,
    Svm,
    Rf,
    Adaboost,
    Lstm,
    Transformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::Nb,
        ModelKind::Logreg,
        ModelKind::Svm,
        ModelKind::Rf,
        ModelKind::Adaboost,
        ModelKind::Lstm,
        ModelKind::Transformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Nb => "nb",
            ModelKind::Logreg => "logreg",
            ModelKind::Svm => "svm",
            ModelKind::Rf => "rf",
            ModelKind::Adaboost => "adaboost",
            ModelKind::Lstm => "lstm",
            ModelKind::Transformer => "transformer",
        }
    }

    /// Column heading in reports.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Nb => "Naive Bayes",
            ModelKind::Logreg => "Logistic Regression",
            ModelKind::Svm => "SVM (linear)",
            ModelKind::Rf => "Random Forest",
            ModelKind::Adaboost => "RF with AdaBoost",
            ModelKind::Lstm => "LSTM",
            ModelKind::Transformer => "transformer (scratch)",
        }
    }

    pub fn seq_kind(self) -> Option<SeqKind> {
        match self {
            ModelKind::Lstm => Some(SeqKind::Lstm),
            ModelKind::Transformer => Some(SeqKind::Transformer),
            _ => None,
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}` (expected one of nb, logreg, svm, rf, adaboost, lstm, transformer)")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A model's input after featurization.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Sparse(SparseVector),
    Sequence(TokenSequence),
}

/// One prediction: the winning class, the model's native scores (log
/// posteriors for naive Bayes, raw decision values for the SVM, vote shares
/// for tree ensembles, probabilities otherwise) and the probability vector
/// the loss is computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "params", rename_all = "lowercase")]
pub enum Classifier {
    Nb(NaiveBayesModel),
    Logreg(LinearModel),
    Svm(LinearModel),
    Rf(TreeEnsemble),
    Adaboost(TreeEnsemble),
    Lstm(SeqModel),
    Transformer(SeqModel),
}

impl Classifier {
    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Nb(_) => ModelKind::Nb,
            Classifier::Logreg(_) => ModelKind::Logreg,
            Classifier::Svm(_) => ModelKind::Svm,
            Classifier::Rf(_) => ModelKind::Rf,
            Classifier::Adaboost(_) => ModelKind::Adaboost,
            Classifier::Lstm(_) => ModelKind::Lstm,
            Classifier::Transformer(_) => ModelKind::Transformer,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Classifier::Nb(m) => m.n_classes(),
            Classifier::Logreg(m) | Classifier::Svm(m) => m.n_classes(),
            Classifier::Rf(m) | Classifier::Adaboost(m) => m.n_classes(),
            Classifier::Lstm(m) | Classifier::Transformer(m) => m.n_classes(),
        }
    }

    /// Turn cleaned tokens into this model's input representation.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], vocab: &Vocabulary, features: &FeatureConfig) -> Encoded {
        encode_for(self.kind(), tokens, vocab, features)
    }

    pub fn predict(&self, x: &Encoded) -> Result<Prediction> {
        let wrong = || Error::Invalid(format!("{} cannot take this input representation", self.kind()));
        let (class, scores, probs) = match (self, x) {
            (Classifier::Nb(m), Encoded::Sparse(v)) => {
                let (c, s) = m.predict(v);
                let p = softmax(&s);
                (c, s, p)
            }
            (Classifier::Logreg(m), Encoded::Sparse(v)) => {
                let (c, p) = m.predict_proba(v)?;
                (c, p.clone(), p)
            }
            (Classifier::Svm(m), Encoded::Sparse(v)) => {
                let (c, s) = m.decision(v)?;
                let p = softmax(&s);
                (c, s, p)
            }
            (Classifier::Rf(m) | Classifier::Adaboost(m), Encoded::Sparse(v)) => {
                let (c, d) = ensemble_predict(m, v);
                (c, d.clone(), d)
            }
            (Classifier::Lstm(m) | Classifier::Transformer(m), Encoded::Sequence(s)) => {
                let (c, p) = m.predict(s)?;
                (c, p.clone(), p)
            }
            _ => return Err(wrong()),
        };
        Ok(Prediction { class, scores, probs })
    }
}

fn encode_for<S: AsRef<str>>(kind: ModelKind, tokens: &[S], vocab: &Vocabulary, features: &FeatureConfig) -> Encoded {
    match kind {
        ModelKind::Nb if !features.nb_tfidf => Encoded::Sparse(count_vector(tokens, vocab)),
        ModelKind::Lstm | ModelKind::Transformer => Encoded::Sequence(encode_sequence(tokens, vocab, features.max_len)),
        _ => Encoded::Sparse(tfidf_vector(tokens, vocab)),
    }
}

/// Where the vocabulary a model was fitted with lives, and its SHA-256.
/// A relative path is taken relative to the model file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabRef {
    pub path: PathBuf,
    pub sha256: String,
}

/// The on-disk model container. Everything needed to reproduce the inputs
/// rides along: label order, the vocabulary reference and the resolved
/// experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub label_names: Vec<String>,
    pub vocab_ref: VocabRef,
    pub config: ExperimentConfig,
    #[serde(flatten)]
    pub classifier: Classifier,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("model file", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self).map_err(|e| Error::json("model file", e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_slice(&bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_slice(bytes).map_err(|e| Error::json("model file", e))?;
        if v.format_version != FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "model format version {} is not supported (expected {FORMAT_VERSION})",
                v.format_version
            )));
        }
        let file: Self = serde_json::from_slice(bytes).map_err(|e| Error::json("model file", e))?;
        if file.label_names.len() != file.classifier.n_classes() {
            return Err(Error::Invalid(format!(
                "model has {} classes but names {} labels",
                file.classifier.n_classes(),
                file.label_names.len()
            )));
        }
        Ok(file)
    }
}

/// A loaded model together with its vocabulary and preprocessing, ready to
/// classify raw token lists.
#[derive(Debug, Clone)]
pub struct Predictor {
    file: ModelFile,
    vocab: Vocabulary,
    pre: Preprocessor,
}

impl Predictor {
    /// Load a model and the vocabulary its `vocab_ref` points at.
    pub fn load(model_path: impl AsRef<Path>) -> Result<Self> {
        let model_path = model_path.as_ref();
        let file = ModelFile::load(model_path)?;
        let vocab_path = if file.vocab_ref.path.is_absolute() {
            file.vocab_ref.path.clone()
        } else {
            model_path.parent().unwrap_or(Path::new("")).join(&file.vocab_ref.path)
        };
        let (vocab, sha) = Vocabulary::load(&vocab_path)?;
        Self::new(file, vocab, &sha)
    }

    /// Load a model but take the vocabulary from `vocab_path`.
    pub fn load_with_vocab(model_path: impl AsRef<Path>, vocab_path: impl AsRef<Path>) -> Result<Self> {
        let file = ModelFile::load(model_path)?;
        let (vocab, sha) = Vocabulary::load(vocab_path)?;
        Self::new(file, vocab, &sha)
    }

    /// `vocab_sha256` is the hash of the vocabulary file's bytes; it has to
    /// match the one recorded in the model.
    pub fn new(file: ModelFile, vocab: Vocabulary, vocab_sha256: &str) -> Result<Self> {
        if file.vocab_ref.sha256 != vocab_sha256 {
            return Err(Error::VocabMismatch {
                expected: file.vocab_ref.sha256.clone(),
                found: vocab_sha256.to_string(),
            });
        }
        let pre = Preprocessor::new(file.config.preprocess.clone())?;
        Ok(Self { file, vocab, pre })
    }

    pub fn file(&self) -> &ModelFile {
        &self.file
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn kind(&self) -> ModelKind {
        self.file.classifier.kind()
    }

    pub fn labels(&self) -> &[String] {
        &self.file.label_names
    }

    /// Clean raw tokens with the model's preprocessing, then classify.
    pub fn predict<S: AsRef<str>>(&self, raw_tokens: &[S]) -> Result<Prediction> {
        self.predict_clean(&self.pre.tokens(raw_tokens))
    }

    /// Classify tokens that are already preprocessed.
    pub fn predict_clean<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Prediction> {
        let x = self.file.classifier.encode(tokens, &self.vocab, &self.file.config.features);
        self.file.classifier.predict(&x)
    }

    /// Metrics over the records of a preprocessed corpus at `indices`.
    /// Cuisines are matched to the model's labels by name.
    pub fn evaluate(&self, corpus: &LabeledCorpus, indices: &[usize]) -> Result<MetricsReport> {
        evaluate_classifier(&self.file.classifier, &self.vocab, &self.file.config.features, &self.file.label_names, corpus, indices)
    }
}

pub fn evaluate_classifier(
    classifier: &Classifier,
    vocab: &Vocabulary,
    features: &FeatureConfig,
    labels: &[String],
    corpus: &LabeledCorpus,
    indices: &[usize],
) -> Result<MetricsReport> {
    let k = labels.len();
    let rows: Vec<(usize, usize, f64)> = indices
        .par_iter()
        .map(|&i| {
            let r = corpus
                .records()
                .get(i)
                .ok_or_else(|| Error::Invalid(format!("record index {i} out of range")))?;
            let truth = labels
                .iter()
                .position(|l| *l == r.cuisine)
                .ok_or_else(|| Error::Invalid(format!("cuisine `{}` (record {}) is unknown to the model", r.cuisine, r.id)))?;
            let p = classifier.predict(&classifier.encode(&r.tokens, vocab, features))?;
            Ok((truth, p.class, cross_entropy(&p.probs, truth)))
        })
        .collect::<Result<_>>()?;
    let truth: Vec<usize> = rows.iter().map(|r| r.0).collect();
    let pred: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let losses: Vec<f64> = rows.iter().map(|r| r.2).collect();
    summarize(&confusion(&truth, &pred, k)?, &losses)
}

/// Outcome of [`train_model`]. The model file's `vocab_ref.path` is left
/// empty for the caller to fill in when it writes the vocabulary.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub file: ModelFile,
    pub vocab: Vocabulary,
    /// Per-epoch history of the sequence models; empty otherwise.
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainedModel {
    pub fn predictor(&self) -> Result<Predictor> {
        Predictor::new(self.file.clone(), self.vocab.clone(), &self.file.vocab_ref.sha256)
    }

    /// Write `<stem>.model.json` and `<stem>.vocab.json` into `dir`, the
    /// model pointing at the vocabulary by file name.
    pub fn save(&mut self, dir: impl AsRef<Path>, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let vocab_name = format!("{stem}.vocab.json");
        let vocab_path = dir.join(&vocab_name);
        let sha = self.vocab.save(&vocab_path)?;
        debug_assert_eq!(sha, self.file.vocab_ref.sha256);
        self.file.vocab_ref = VocabRef {
            path: PathBuf::from(vocab_name),
            sha256: sha,
        };
        let model_path = dir.join(format!("{stem}.model.json"));
        self.file.save(&model_path)?;
        Ok((model_path, vocab_path))
    }
}

/// Fit `config.model.kind` on the training part of a preprocessed corpus.
/// The vocabulary is built from the training records only; sequence models
/// early-stop on the validation part.
pub fn train_model(config: &ExperimentConfig, corpus: &LabeledCorpus, split: &DataSplit) -> Result<TrainedModel> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::Invalid("the training partition is empty".into()));
    }
    let records = corpus.records();
    let vocab = Vocabulary::build(split.train.iter().map(|&i| records[i].tokens.as_slice()), config.features.min_df)?;
    let kind = config.model.kind;
    let k = corpus.n_classes();
    let m = vocab.n_features();
    let y: Vec<usize> = split.train.iter().map(|&i| corpus.target(i)).collect();
    let encode = |idx: &[usize]| -> Vec<Encoded> {
        idx.par_iter()
            .map(|&i| encode_for(kind, &records[i].tokens, &vocab, &config.features))
            .collect()
    };
    let sparse = |enc: Vec<Encoded>| -> Vec<SparseVector> {
        enc.into_iter()
            .map(|e| match e {
                Encoded::Sparse(v) => v,
                Encoded::Sequence(_) => unreachable!("bag model encoded as a sequence"),
            })
            .collect()
    };
    let mc = &config.model;
    let mut history = Vec::new();
    let mut best_epoch = None;
    let classifier = match kind {
        ModelKind::Nb => Classifier::Nb(nb_fit(&sparse(encode(&split.train)), &y, corpus.labels(), m, mc.nb.alpha)?),
        ModelKind::Logreg => Classifier::Logreg(logreg_fit(&sparse(encode(&split.train)), &y, k, m, &mc.linear)?),
        ModelKind::Svm => Classifier::Svm(svm_fit(&sparse(encode(&split.train)), &y, k, m, &mc.linear)?),
        ModelKind::Rf => Classifier::Rf(rf_fit(&sparse(encode(&split.train)), &y, k, m, &mc.forest)?),
        ModelKind::Adaboost => Classifier::Adaboost(adaboost_fit(&sparse(encode(&split.train)), &y, k, &mc.boost)?),
        ModelKind::Lstm | ModelKind::Transformer => {
            let seqs = |idx: &[usize]| -> Vec<(TokenSequence, usize)> {
                encode(idx)
                    .into_iter()
                    .zip(idx)
                    .map(|(e, &i)| match e {
                        Encoded::Sequence(s) => (s, corpus.target(i)),
                        Encoded::Sparse(_) => unreachable!("sequence model encoded as a bag"),
                    })
                    .collect()
            };
            let seq_kind = kind.seq_kind().expect("sequence kind");
            let mut seq_cfg = mc.seq.clone();
            seq_cfg.max_len = config.features.max_len;
            let outcome = seq_models::train(seq_kind, &seqs(&split.train), &seqs(&split.validation), vocab.len(), k, &seq_cfg)?;
            history = outcome.history;
            best_epoch = Some(outcome.best_epoch);
            match seq_kind {
                SeqKind::Lstm => Classifier::Lstm(outcome.model),
                SeqKind::Transformer => Classifier::Transformer(outcome.model),
            }
        }
    };
    let sha = sha256_hex(vocab.to_json()?.as_bytes());
    Ok(TrainedModel {
        file: ModelFile {
            format_version: FORMAT_VERSION,
            label_names: corpus.labels().to_vec(),
            vocab_ref: VocabRef {
                path: PathBuf::new(),
                sha256: sha,
            },
            config: config.clone(),
            classifier,
        },
        vocab,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split, RecipeRecord, SplitRatios};

    fn corpus() -> LabeledCorpus {
        let mut records = Vec::new();
        for i in 0..40 {
            let (cuisine, marker) = match i % 3 {
                0 => ("italian", "basil"),
                1 => ("mexican", "tortilla"),
                _ => ("indian", "garam masala"),
            };
            records.push(RecipeRecord {
                id: i,
                continent: "x".into(),
                cuisine: cuisine.into(),
                tokens: vec!["salt".into(), marker.into(), "water".into(), format!("filler{}", i % 5)],
            });
        }
        LabeledCorpus::from_records(records).unwrap()
    }

    fn fitted(kind: ModelKind) -> (TrainedModel, LabeledCorpus, DataSplit) {
        let c = corpus();
        let s = split(&c, SplitRatios::default(), 1, true).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.model.kind = kind;
        cfg.model.forest.n_trees = 5;
        cfg.model.boost.n_rounds = 5;
        cfg.model.seq = crate::seq_models::SeqConfig {
            epochs: 3,
            embed_dim: 4,
            hidden: 4,
            n_layers: 1,
            n_heads: 1,
            ..Default::default()
        };
        cfg.features.max_len = 8;
        cfg.model.seq.max_len = 8;
        (train_model(&cfg, &c, &s).unwrap(), c, s)
    }

    #[test]
    fn every_kind_round_trips_through_json() {
        for kind in ModelKind::ALL {
            let (t, _, _) = fitted(kind);
            let json = t.file.to_json().unwrap();
            assert!(json.contains(&format!("\"model_type\":\"{kind}\"")), "{kind}");
            let back = ModelFile::from_slice(json.as_bytes()).unwrap();
            assert_eq!(back, t.file, "{kind}");
            assert_eq!(back.to_json().unwrap(), json, "{kind}");
        }
    }

    #[test]
    fn predictions_carry_a_probability_vector() {
        for kind in ModelKind::ALL {
            let (t, c, s) = fitted(kind);
            let p = t.predictor().unwrap();
            let r = &c.records()[s.test[0]];
            let pred = p.predict(&r.tokens).unwrap();
            assert_eq!(pred.probs.len(), 3);
            assert!((pred.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{kind}");
            assert_eq!(pred.scores.len(), 3);
        }
    }

    #[test]
    fn markers_are_learned_by_the_bag_models() {
        for kind in [ModelKind::Nb, ModelKind::Logreg, ModelKind::Svm] {
            let (t, c, s) = fitted(kind);
            let report = t.predictor().unwrap().evaluate(&c, &s.test).unwrap();
            assert_eq!(report.accuracy, 1.0, "{kind}");
        }
    }

    #[test]
    fn vocabulary_hash_is_checked() {
        let (t, _, _) = fitted(ModelKind::Nb);
        let e = Predictor::new(t.file.clone(), t.vocab.clone(), "beef").unwrap_err();
        match e {
            Error::VocabMismatch { expected, found } => {
                assert_eq!(expected, t.file.vocab_ref.sha256);
                assert_eq!(found, "beef");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn saved_files_load_back() {
        let dir = tempfile::tempdir().unwrap();
        let (mut t, c, s) = fitted(ModelKind::Logreg);
        let (model_path, vocab_path) = t.save(dir.path(), "m").unwrap();
        assert!(vocab_path.exists());
        let p = Predictor::load(&model_path).unwrap();
        let r = &c.records()[s.test[0]];
        assert_eq!(p.predict(&r.tokens).unwrap(), t.predictor().unwrap().predict(&r.tokens).unwrap());
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let (t, _, _) = fitted(ModelKind::Nb);
        let json = t.file.to_json().unwrap().replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(matches!(ModelFile::from_slice(json.as_bytes()), Err(Error::Invalid(_))));
    }

    #[test]
    fn kinds_parse_by_name() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("knn".parse::<ModelKind>().is_err());
    }
}
