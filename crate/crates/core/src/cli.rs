//! The `cuisine` command line: `split`, `train`, `evaluate`, `predict`,
//! `analyze`, `gradcheck` and `compare`.
//!
//! Exit codes are 0 on success, 1 on a runtime failure and 2 on a usage,
//! configuration or missing-input error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::corpus::{frequency_table, load_corpus, sparsity_ratio, split, Format, LabeledCorpus, Partition, SplitManifest, SplitRatios};
use crate::error::{Error, Result};
use crate::linear_models::{self, LinearKind};
use crate::metrics::{Averaging, ComparisonTable, MetricsReport};
use crate::model::{train_model, ModelKind, Predictor, TrainedModel};
use crate::numeric::{grad_check, Differentiable, GradCheckConfig, GradCheckReport, ParamGroup};
use crate::preprocess::preprocess_corpus;
use crate::seq_models::{self, SeqKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Thresholds of the "more than" half of the frequency table.
pub const ABOVE_THRESHOLDS: [usize; 10] = [1000, 5000, 10000, 15000, 20000, 25000, 30000, 35000, 40000, 45000];
/// Thresholds of the "fewer than" half of the frequency table.
pub const BELOW_THRESHOLDS: [usize; 10] = [2, 3, 4, 5, 6, 7, 8, 10, 15, 20];

/// Largest parameter count `gradcheck` will run on.
pub const GRADCHECK_MAX_PARAMS: usize = 50_000;

#[derive(Debug, Parser)]
#[command(name = "cuisine", version, about = "Cuisine classification over recipe token sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set model.linear.epochs=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Dataset path (same as `--set data.path=...`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<Format>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(self.config.as_deref(), &self.set)?;
        if let Some(d) = &self.data {
            c.data.path = Some(d.clone());
        }
        if let Some(f) = self.format {
            c.data.format = f;
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a train/validation/test split manifest.
    Split {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Ratios such as 7:1:2.
        #[arg(long)]
        ratios: Option<SplitRatios>,
        #[arg(long)]
        seed: Option<u64>,
        /// Split the whole corpus at once instead of per class.
        #[arg(long)]
        no_stratify: bool,
        /// Manifest to write.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit a model and write it with its vocabulary and a run manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        model: Option<ModelKind>,
        /// Existing split manifest; without one a split is made from the config.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Output directory (default: `output.dir` from the config).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Score a saved model on one partition of a split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long, default_value = "test")]
        which: Partition,
        /// Dataset (default: the one the model was trained on).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
        /// Vocabulary file to use instead of the model's reference.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Directory for the reports (default: next to the model).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Classify JSONL token lists, one output line per input line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output file (default: standard output).
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Dataset statistics: class counts, token frequency table, sparsity.
    Analyze {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Count raw tokens instead of preprocessed ones.
        #[arg(long)]
        raw: bool,
        /// Also write the report as JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of a model's analytic gradient.
    Gradcheck {
        #[arg(long)]
        model: GradModel,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pass threshold on the maximum relative error (default 1e-4 for
        /// sequence models, 1e-6 for linear ones).
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Perturb the analytic gradient; the check must then fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Train and test every model kind on one split; write a side-by-side report.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        split: Option<PathBuf>,
        /// Kinds to include (default: all seven).
        #[arg(long, value_delimiter = ',')]
        models: Vec<ModelKind>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradModel {
    Lstm,
    Transformer,
    Logreg,
    Svm,
}

/// Dataset figures recorded with every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_records: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub n_classes: usize,
    /// Real tokens in the fitted vocabulary.
    pub vocab_size: usize,
    pub sparsity: f64,
}

/// What a `train` or `compare` run did and where its outputs are. Paths
/// are as written; every one of them exists once the command returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetStats,
    pub timings_seconds: BTreeMap<String, f64>,
    pub split_path: PathBuf,
    pub model_path: PathBuf,
    pub vocab_path: PathBuf,
    pub history_path: Option<PathBuf>,
    pub metrics_paths: Vec<PathBuf>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotFound { .. } | Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

/// Parse `args` (program name first) and run the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Split {
            cfg,
            ratios,
            seed,
            no_stratify,
            out,
        } => {
            let mut c = cfg.resolve()?;
            if let Some(r) = ratios {
                c.split.ratios = r;
            }
            if let Some(s) = seed {
                c.split.seed = s;
            }
            if no_stratify {
                c.split.stratified = false;
            }
            let corpus = load(&c, None)?;
            let m = make_split(&c, &corpus)?;
            m.write(&out)?;
            println!("train={} val={} test={}", m.train.len(), m.validation.len(), m.test.len());
            Ok(EXIT_OK)
        }
        Command::Train { cfg, model, split, out } => {
            let mut c = cfg.resolve()?;
            if let Some(k) = model {
                c.model.kind = k;
                c.validate()?;
            }
            let out = out.unwrap_or_else(|| c.output.dir.clone());
            let run = train_run(&c, split.as_deref(), &out, "train")?;
            if let Some((which, report)) = run.validation.as_ref().map(|r| ("validation", r)).or(run.test.as_ref().map(|r| ("test", r))) {
                println!("{which} partition:");
                print!("{}", report.render_text(c.model.kind.title(), &run.labels));
            }
            println!("model: {}", run.manifest.model_path.display());
            Ok(EXIT_OK)
        }
        Command::Evaluate {
            model,
            split,
            which,
            data,
            format,
            vocab,
            out,
        } => {
            let predictor = match &vocab {
                Some(v) => Predictor::load_with_vocab(&model, v)?,
                None => Predictor::load(&model)?,
            };
            let mut c = predictor.file().config.clone();
            if let Some(d) = data {
                c.data.path = Some(d);
            }
            if let Some(f) = format {
                c.data.format = f;
            }
            let corpus = preprocess_corpus(&load(&c, None)?, &c.preprocess)?;
            let manifest = SplitManifest::read(&split)?;
            let parts = manifest.resolve(&corpus)?;
            let idx = match which {
                Partition::Train => &parts.train,
                Partition::Validation => &parts.validation,
                Partition::Test => &parts.test,
            };
            let report = predictor.evaluate(&corpus, idx)?;
            let dir = out.unwrap_or_else(|| model.parent().unwrap_or(Path::new(".")).to_path_buf());
            let stem = model_stem(&model);
            let (json, text) = write_report(&report, &dir, &format!("{stem}.{}", partition_name(which)), predictor.kind(), predictor.labels())?;
            print!("{}", std::fs::read_to_string(&text).map_err(|e| Error::io(&text, e))?);
            println!("report: {}", json.display());
            Ok(EXIT_OK)
        }
        Command::Predict {
            model,
            input,
            output,
            vocab,
        } => {
            let predictor = match &vocab {
                Some(v) => Predictor::load_with_vocab(&model, v)?,
                None => Predictor::load(&model)?,
            };
            let file = std::fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
            let lines: Vec<String> = BufReader::new(file)
                .lines()
                .collect::<std::io::Result<_>>()
                .map_err(|e| Error::io(&input, e))?;
            let records: Vec<String> = lines
                .par_iter()
                .enumerate()
                .map(|(n, line)| predict_line(&predictor, n + 1, line))
                .collect();
            let mut sink: Box<dyn Write> = match &output {
                Some(p) => Box::new(BufWriter::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?)),
                None => Box::new(BufWriter::new(std::io::stdout().lock())),
            };
            let where_to = output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
            for r in records {
                writeln!(sink, "{r}").map_err(|e| Error::io(&where_to, e))?;
            }
            sink.flush().map_err(|e| Error::io(&where_to, e))?;
            Ok(EXIT_OK)
        }
        Command::Analyze { cfg, raw, out } => {
            let c = cfg.resolve()?;
            let report = analyze(&c, raw)?;
            print!("{}", report.render());
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            Ok(EXIT_OK)
        }
        Command::Gradcheck {
            model,
            seed,
            tolerance,
            out,
            corrupt_gradient,
        } => {
            let (report, default_tol, params) = run_gradcheck(model, seed, corrupt_gradient)?;
            let tol = tolerance.unwrap_or(default_tol);
            let passed = report.passes(tol);
            let mut text = format!("gradcheck {model:?} ({params} parameters, seed {seed})\n");
            for g in &report.groups {
                let _ = writeln!(text, "  {:<16} {:>5} checked  max rel error {:.3e}", g.name, g.checked, g.max_rel_error);
            }
            let _ = writeln!(
                text,
                "{} max rel error {:.3e} (tolerance {tol:e})",
                if passed { "PASS" } else { "FAIL" },
                report.max_rel_error
            );
            print!("{text}");
            if let Some(p) = out {
                let rows: Vec<_> = report
                    .groups
                    .iter()
                    .map(|g| serde_json::json!({"tensor": g.name, "checked": g.checked, "max_rel_error": g.max_rel_error}))
                    .collect();
                write_json(
                    &p,
                    &serde_json::json!({
                        "model": format!("{model:?}").to_lowercase(),
                        "seed": seed,
                        "parameters": params,
                        "tolerance": tol,
                        "max_rel_error": report.max_rel_error,
                        "passed": passed,
                        "tensors": rows,
                    }),
                )?;
            }
            Ok(if passed { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::Compare { cfg, split, models, out } => {
            let c = cfg.resolve()?;
            let out = out.unwrap_or_else(|| c.output.dir.clone());
            let kinds = if models.is_empty() { compare_order() } else { models };
            let split_path = match split {
                Some(p) => p,
                None => {
                    let corpus = load(&c, None)?;
                    let p = out_file(&out, "split.json")?;
                    make_split(&c, &corpus)?.write(&p)?;
                    p
                }
            };
            let mut columns = Vec::new();
            let mut runs = Vec::new();
            for kind in kinds {
                let mut ck = c.clone();
                ck.model.kind = kind;
                ck.validate()?;
                log::info!("compare: fitting {kind}");
                let run = train_run(&ck, Some(&split_path), &out, "compare")?;
                let test = run
                    .test
                    .ok_or_else(|| Error::Invalid("compare needs a non-empty test partition".into()))?;
                columns.push((kind, test));
                runs.push(run.manifest);
            }
            let tables: Vec<ComparisonTable> = [Averaging::Weighted, Averaging::Macro]
                .into_iter()
                .map(|avg| ComparisonTable {
                    averaging: avg,
                    columns: columns.iter().map(|(k, r)| (k.title().to_string(), r.summary(avg))).collect(),
                })
                .collect();
            let text: String = tables.iter().map(|t| t.render() + "\n").collect();
            let text_path = out_file(&out, "comparison.txt")?;
            std::fs::write(&text_path, &text).map_err(|e| Error::io(&text_path, e))?;
            let json_path = out_file(&out, "comparison.json")?;
            write_json(
                &json_path,
                &serde_json::json!({
                    "partition": "test",
                    "split_path": split_path,
                    "tables": tables,
                    "runs": runs,
                }),
            )?;
            print!("{text}");
            println!("report: {}", json_path.display());
            Ok(EXIT_OK)
        }
    }
}

/// Column order of the comparison report.
pub fn compare_order() -> Vec<ModelKind> {
    vec![
        ModelKind::Logreg,
        ModelKind::Nb,
        ModelKind::Svm,
        ModelKind::Rf,
        ModelKind::Adaboost,
        ModelKind::Lstm,
        ModelKind::Transformer,
    ]
}

fn partition_name(p: Partition) -> &'static str {
    match p {
        Partition::Train => "train",
        Partition::Validation => "validation",
        Partition::Test => "test",
    }
}

fn model_stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".model.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name)
        .to_string()
}

fn out_file(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir.join(name))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}


/// Load the configured dataset, reporting skipped rows.
fn load(c: &ExperimentConfig, path: Option<&Path>) -> Result<LabeledCorpus> {
    let path = match path {
        Some(p) => p,
        None => c.data_path()?,
    };
    let outcome = load_corpus(path, c.data.format)?;
    if !outcome.issues.is_empty() {
        log::warn!("{}: skipped {} malformed rows", path.display(), outcome.issues.len());
        for i in outcome.issues.iter().take(5) {
            log::warn!("  line {}: {}", i.line, i.message);
        }
    }
    Ok(outcome.corpus)
}

fn make_split(c: &ExperimentConfig, corpus: &LabeledCorpus) -> Result<SplitManifest> {
    let s = split(corpus, c.split.ratios, c.split.seed, c.split.stratified)?;
    Ok(SplitManifest::from_split(corpus, &s, c.split.ratios, c.split.seed, c.split.stratified))
}

/// Fit one model and write `<kind>.model.json`, `<kind>.vocab.json`, the
/// validation and test reports, the epoch history of sequence models and
/// `<kind>.run.json`.
fn train_run(c: &ExperimentConfig, split_path: Option<&Path>, out: &Path, command: &str) -> Result<RunOutcome> {
    let kind = c.model.kind;
    let mut timings = BTreeMap::new();
    let t0 = Instant::now();
    let raw = load(c, None)?;
    let corpus = preprocess_corpus(&raw, &c.preprocess)?;
    timings.insert("load".to_string(), t0.elapsed().as_secs_f64());

    let split_path = match split_path {
        Some(p) => p.to_path_buf(),
        None => {
            let p = out_file(out, "split.json")?;
            make_split(c, &raw)?.write(&p)?;
            p
        }
    };
    let manifest = SplitManifest::read(&split_path)?;
    let parts = manifest.resolve(&corpus)?;

    let t1 = Instant::now();
    let mut trained: TrainedModel = train_model(c, &corpus, &parts)?;
    timings.insert("train".to_string(), t1.elapsed().as_secs_f64());
    let (model_path, vocab_path) = trained.save(out, kind.name())?;

    let history_path = if trained.history.is_empty() {
        None
    } else {
        let p = out.join(format!("{}.history.json", kind.name()));
        write_json(
            &p,
            &serde_json::json!({"best_epoch": trained.best_epoch, "epochs": trained.history}),
        )?;
        Some(p)
    };

    let t2 = Instant::now();
    let predictor = trained.predictor()?;
    let mut metrics_paths = Vec::new();
    let mut reports = Vec::new();
    for (which, idx) in [(Partition::Validation, &parts.validation), (Partition::Test, &parts.test)] {
        if idx.is_empty() {
            log::warn!("{} partition is empty; no report written", partition_name(which));
            continue;
        }
        let report = predictor.evaluate(&corpus, idx)?;
        let (json, text) = write_report(&report, out, &format!("{}.{}", kind.name(), partition_name(which)), kind, predictor.labels())?;
        metrics_paths.push(json);
        metrics_paths.push(text);
        reports.push((which, report));
    }
    timings.insert("evaluate".to_string(), t2.elapsed().as_secs_f64());
    let mut take = |which: Partition| reports.iter().position(|r| r.0 == which).map(|i| reports.remove(i).1);
    let (validation, test) = (take(Partition::Validation), take(Partition::Test));

    let run = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: c.clone(),
        dataset: DatasetStats {
            n_records: corpus.len(),
            n_train: parts.train.len(),
            n_validation: parts.validation.len(),
            n_test: parts.test.len(),
            n_classes: corpus.n_classes(),
            vocab_size: trained.vocab.n_features(),
            sparsity: sparsity_ratio(&corpus)?,
        },
        timings_seconds: timings,
        split_path,
        model_path,
        vocab_path,
        history_path,
        metrics_paths,
    };
    write_json(&out.join(format!("{}.run.json", kind.name())), &run)?;
    Ok(RunOutcome {
        manifest: run,
        labels: predictor.labels().to_vec(),
        validation,
        test,
    })
}

struct RunOutcome {
    manifest: RunManifest,
    labels: Vec<String>,
    validation: Option<MetricsReport>,
    test: Option<MetricsReport>,
}

fn write_report(report: &MetricsReport, dir: &Path, stem: &str, kind: ModelKind, labels: &[String]) -> Result<(PathBuf, PathBuf)> {
    let json = out_file(dir, &format!("{stem}.metrics.json"))?;
    write_json(&json, report)?;
    let text = dir.join(format!("{stem}.metrics.txt"));
    std::fs::write(&text, report.render_text(kind.title(), labels)).map_err(|e| Error::io(&text, e))?;
    Ok((json, text))
}

#[derive(Deserialize)]
struct PredictInput {
    #[serde(default)]
    id: Option<serde_json::Value>,
    tokens: Vec<String>,
}

/// One output line for one input line: a prediction, or an error record.
fn predict_line(p: &Predictor, line_no: usize, line: &str) -> String {
    let parsed: std::result::Result<PredictInput, String> = serde_json::from_str(line).map_err(|e| e.to_string());
    let id = parsed
        .as_ref()
        .ok()
        .and_then(|r| r.id.clone())
        .unwrap_or_else(|| serde_json::Value::from(line_no));
    let out = parsed.and_then(|r| p.predict(&r.tokens).map_err(|e| e.to_string()));
    let value = match out {
        Ok(pred) => serde_json::json!({
            "id": id,
            "cuisine": p.labels()[pred.class],
            "scores": pred.scores,
        }),
        Err(msg) => serde_json::json!({"id": id, "line": line_no, "error": msg}),
    };
    value.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CuisineCount {
    pub cuisine: String,
    pub recipes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCount {
    pub threshold: usize,
    pub features: usize,
}

/// Output of `analyze`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetReport {
    pub n_records: usize,
    pub n_classes: usize,
    pub per_cuisine: Vec<CuisineCount>,
    pub preprocessed: bool,
    /// Records left without tokens by preprocessing (not counted below).
    pub records_dropped: usize,
    pub vocabulary_size: usize,
    pub total_occurrences: usize,
    pub sparsity_ratio: f64,
    /// Distinct tokens occurring more than `threshold` times.
    pub more_than: Vec<ThresholdCount>,
    /// Distinct tokens occurring fewer than `threshold` times.
    pub fewer_than: Vec<ThresholdCount>,
}

/// Class counts come from the corpus as loaded; token statistics from the
/// preprocessed corpus unless `raw` is set.
pub fn analyze(c: &ExperimentConfig, raw: bool) -> Result<DatasetReport> {
    let corpus = load(c, None)?;
    let tokens = if raw { corpus.clone() } else { preprocess_corpus(&corpus, &c.preprocess)? };
    let thresholds: Vec<usize> = ABOVE_THRESHOLDS.iter().chain(&BELOW_THRESHOLDS).copied().collect();
    let freq = frequency_table(&tokens, &thresholds)?;
    let pick = |ts: &[usize], above: bool| -> Vec<ThresholdCount> {
        ts.iter()
            .map(|&t| {
                let row = freq.row(t).expect("threshold requested");
                ThresholdCount {
                    threshold: t,
                    features: if above { row.above } else { row.below },
                }
            })
            .collect()
    };
    Ok(DatasetReport {
        n_records: corpus.len(),
        n_classes: corpus.n_classes(),
        per_cuisine: corpus
            .labels()
            .iter()
            .zip(corpus.class_counts())
            .map(|(l, n)| CuisineCount {
                cuisine: l.clone(),
                recipes: n,
            })
            .collect(),
        preprocessed: !raw,
        records_dropped: corpus.len() - tokens.len(),
        vocabulary_size: freq.distinct_tokens,
        total_occurrences: freq.total_occurrences,
        sparsity_ratio: sparsity_ratio(&tokens)?,
        more_than: pick(&ABOVE_THRESHOLDS, true),
        fewer_than: pick(&BELOW_THRESHOLDS, false),
    })
}

impl DatasetReport {
    /// Class counts in two alphabetical columns, then the frequency table
    /// with the "more than" and "fewer than" halves side by side.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "records: {}  cuisines: {}", self.n_records, self.n_classes);
        let mut counts = self.per_cuisine.clone();
        counts.sort_by(|a, b| a.cuisine.cmp(&b.cuisine));
        let half = counts.len().div_ceil(2);
        let w = counts.iter().map(|c| c.cuisine.len()).max().unwrap_or(7).max(7);
        let _ = writeln!(out, "{:<w$}  {:>9}  {:<w$}  {:>9}", "Cuisine", "Recipes", "Cuisine", "Recipes");
        for i in 0..half {
            let l = &counts[i];
            let _ = write!(out, "{:<w$}  {:>9}", l.cuisine, l.recipes);
            if let Some(r) = counts.get(i + half) {
                let _ = write!(out, "  {:<w$}  {:>9}", r.cuisine, r.recipes);
            }
            out.push('\n');
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{} tokens: {} distinct, {} occurrences, sparsity ratio {:.4}",
            if self.preprocessed { "preprocessed" } else { "raw" },
            self.vocabulary_size,
            self.total_occurrences,
            self.sparsity_ratio
        );
        if self.records_dropped > 0 {
            let _ = writeln!(out, "{} records had no tokens left after preprocessing", self.records_dropped);
        }
        let _ = writeln!(out, "{:>18}  {:>10}  {:>18}  {:>10}", "Number of Features", "Frequency", "Number of Features", "Frequency");
        for (a, b) in self.more_than.iter().zip(&self.fewer_than) {
            let _ = writeln!(
                out,
                "{:>18}  {:>10}  {:>18}  {:>10}",
                a.features,
                format!("> {}", a.threshold),
                format!("< {}", b.threshold),
                b.features
            );
        }
        out
    }
}

/// Wraps a model and nudges its analytic gradient, as a negative control
/// for the checker.
#[derive(Clone)]
struct Corrupted<M>(M);

impl<M: Differentiable + Clone> Differentiable for Corrupted<M> {
    type Input = M::Input;

    fn param_groups(&self) -> Vec<ParamGroup> {
        self.0.param_groups()
    }

    fn params(&self) -> Vec<f64> {
        self.0.params()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.0.set_params(params)
    }

    fn loss(&self, input: &Self::Input) -> Result<f64> {
        self.0.loss(input)
    }

    fn gradient(&self, input: &Self::Input) -> Result<Vec<f64>> {
        let mut g = self.0.gradient(input)?;
        for v in &mut g {
            *v = *v * 1.01 + 1e-3;
        }
        Ok(g)
    }
}

fn check<M: Differentiable + Clone>(model: M, input: &M::Input, corrupt: bool) -> Result<GradCheckReport> {
    let cfg = GradCheckConfig::default();
    if corrupt {
        grad_check(&Corrupted(model), input, &cfg)
    } else {
        grad_check(&model, input, &cfg)
    }
}

/// Run the gradient check on the tiny fixture for `model`. Returns the
/// report, the default tolerance and the parameter count.
pub fn run_gradcheck(model: GradModel, seed: u64, corrupt: bool) -> Result<(GradCheckReport, f64, usize)> {
    match model {
        GradModel::Lstm | GradModel::Transformer => {
            let kind = if model == GradModel::Lstm { SeqKind::Lstm } else { SeqKind::Transformer };
            let (m, batch) = seq_models::gradcheck_fixture(kind, seed);
            let n = m.param_count();
            if n > GRADCHECK_MAX_PARAMS {
                return Err(Error::Config(format!("gradcheck needs a tiny model; {n} parameters exceed {GRADCHECK_MAX_PARAMS}")));
            }
            Ok((check(m, &batch[..], corrupt)?, 1e-4, n))
        }
        GradModel::Logreg | GradModel::Svm => {
            let kind = if model == GradModel::Logreg { LinearKind::Logreg } else { LinearKind::Svm };
            let (m, batch) = linear_models::gradcheck_fixture(kind, seed);
            let n = m.params().len();
            Ok((check(m, &batch[..], corrupt)?, 1e-6, n))
        }
    }
}
