//! Experiment configuration: one TOML document with a section per stage.
//!
//! ```toml
//! [data]
//! path = "recipes.jsonl"
//! format = "jsonl"
//!
//! [split]
//! ratios = "7:1:2"
//! seed = 42
//!
//! [model]
//! kind = "logreg"
//!
//! [model.linear]
//! epochs = 50
//! ```
//!
//! Every key can also be set from the command line as `section.key=value`,
//! where the value is read as a TOML literal and falls back to a bare string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Format, SplitRatios};
use crate::error::{Error, Result};
use crate::linear_models::{BoostConfig, ForestConfig, LinearConfig};
use crate::model::ModelKind;
use crate::preprocess::CleaningConfig;
use crate::seq_models::SeqConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub preprocess: CleaningConfig,
    pub features: FeatureConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub min_df: usize,
    /// Sequence length for the order-aware models.
    pub max_len: usize,
    /// Feed naive Bayes TF-IDF weights instead of raw counts.
    pub nb_tfidf: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            min_df: 1,
            max_len: 64,
            nb_tfidf: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(serialize_with = "ratios_out", deserialize_with = "ratios_in")]
    pub ratios: SplitRatios,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            seed: 42,
            stratified: true,
        }
    }
}

fn ratios_out<S: Serializer>(r: &SplitRatios, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(r)
}

fn ratios_in<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<SplitRatios, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NbConfig {
    pub alpha: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub nb: NbConfig,
    pub linear: LinearConfig,
    pub forest: ForestConfig,
    pub boost: BoostConfig,
    pub seq: SeqConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs") }
    }
}

impl ExperimentConfig {
    /// Read `path` (or start from the defaults), apply `overrides` in order
    /// and validate the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_table(doc)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc = text.parse::<toml::Table>().map_err(|e| Error::Config(e.to_string()))?;
        Self::from_table(doc)
    }

    fn from_table(mut doc: toml::Table) -> Result<Self> {
        reconcile_max_len(&mut doc)?;
        let mut config: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.model.seq.max_len = config.features.max_len;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.min_df == 0 {
            return Err(Error::Config("features.min_df must be at least 1".into()));
        }
        if self.features.max_len == 0 {
            return Err(Error::Config("features.max_len must be at least 1".into()));
        }
        if !(self.model.nb.alpha > 0.0 && self.model.nb.alpha.is_finite()) {
            return Err(Error::Config("model.nb.alpha must be positive".into()));
        }
        if let Some(kind) = self.model.kind.seq_kind() {
            self.model.seq.validate(kind)?;
        }
        Ok(())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .path
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given: set data.path or pass --data".into()))
    }
}

/// `features.max_len` is the one sequence length. A `model.seq.max_len` on
/// its own is accepted as a synonym; the two set to different values is an
/// error.
fn reconcile_max_len(doc: &mut toml::Table) -> Result<()> {
    let seq = doc
        .get("model")
        .and_then(|m| m.get("seq"))
        .and_then(|s| s.get("max_len"))
        .cloned();
    let Some(seq) = seq else { return Ok(()) };
    let features = doc
        .entry("features")
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let Some(features) = features.as_table_mut() else {
        return Err(Error::Config("`features` must be a table".into()));
    };
    match features.get("max_len") {
        Some(f) if *f != seq => Err(Error::Config(format!(
            "features.max_len = {f} disagrees with model.seq.max_len = {seq}"
        ))),
        Some(_) => Ok(()),
        None => {
            features.insert("max_len".into(), seq);
            Ok(())
        }
    }
}

/// Apply one `a.b.c=value` assignment to a TOML document.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').map(str::trim).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_models::Multiclass;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
        assert!(text.contains("ratios = \"7:1:2\""), "{text}");
    }

    #[test]
    fn overrides_reach_nested_sections() {
        let c = ExperimentConfig::load(
            None,
            &[
                "model.kind=svm".into(),
                "model.linear.epochs=7".into(),
                "model.linear.multiclass=softmax".into(),
                "split.ratios=8:1:1".into(),
                "data.path=some/file.csv".into(),
                "data.format=csv".into(),
                "preprocess.lemmatize=false".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.model.kind, ModelKind::Svm);
        assert_eq!(c.model.linear.epochs, 7);
        assert_eq!(c.model.linear.multiclass, Multiclass::Softmax);
        assert_eq!(c.split.ratios, SplitRatios::new(8, 1, 1).unwrap());
        assert_eq!(c.data.path.as_deref(), Some(Path::new("some/file.csv")));
        assert_eq!(c.data.format, Format::Csv);
        assert!(!c.preprocess.lemmatize);
    }

    #[test]
    fn later_overrides_win_over_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[model]\nkind = \"nb\"\n[model.nb]\nalpha = 0.5\n").unwrap();
        let c = ExperimentConfig::load(Some(&p), &["model.nb.alpha=2".into()]).unwrap();
        assert_eq!(c.model.kind, ModelKind::Nb);
        assert_eq!(c.model.nb.alpha, 2.0);
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("[model]\nkind = \"knn\"\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[features]\nmindf = 2\n"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("[nonsense]\n"), Err(Error::Config(_))));
        assert!(ExperimentConfig::load(None, &["model.kind".into()]).is_err());
        assert!(ExperimentConfig::load(None, &["features.min_df=0".into()]).is_err());
    }

    #[test]
    fn max_len_is_shared_with_the_sequence_models() {
        let c = ExperimentConfig::load(None, &["features.max_len=12".into()]).unwrap();
        assert_eq!(c.model.seq.max_len, 12);
        let c = ExperimentConfig::load(None, &["model.seq.max_len=9".into()]).unwrap();
        assert_eq!((c.features.max_len, c.model.seq.max_len), (9, 9));
        assert!(ExperimentConfig::load(None, &["model.seq.max_len=9".into(), "features.max_len=10".into()]).is_err());
    }

    #[test]
    fn missing_file_is_not_found() {
        let e = ExperimentConfig::load(Some(Path::new("/no/such/config.toml")), &[]).unwrap_err();
        assert!(matches!(e, Error::NotFound { .. }));
    }
}
