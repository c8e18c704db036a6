//! Labeled recipe corpora: loading, persistence, statistics and splits.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Prng;

/// One recipe. `tokens` keeps the order in which ingredients, processes and
/// utensils are used; it is never sorted or deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeRecord {
    pub id: i64,
    pub continent: String,
    pub cuisine: String,
    pub tokens: Vec<String>,
}

/// Records plus the dense label space. Label ids follow first occurrence in
/// the source file and stay fixed for the life of the corpus.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    records: Vec<RecipeRecord>,
    labels: Vec<String>,
    label_index: HashMap<String, usize>,
    targets: Vec<usize>,
}

impl PartialEq for LabeledCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records && self.labels == other.labels
    }
}

impl LabeledCorpus {
    pub fn from_records(records: Vec<RecipeRecord>) -> Result<Self> {
        let mut labels = Vec::new();
        let mut seen = HashSet::new();
        for r in &records {
            if seen.insert(r.cuisine.as_str()) {
                labels.push(r.cuisine.clone());
            }
        }
        Self::with_labels(records, labels)
    }

    /// Build against a fixed label list, e.g. to keep ids stable after
    /// preprocessing dropped every record of some class.
    pub fn with_labels(records: Vec<RecipeRecord>, labels: Vec<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let label_index: HashMap<String, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        if label_index.len() != labels.len() {
            return Err(Error::Invalid("duplicate label names".into()));
        }
        let mut targets = Vec::with_capacity(records.len());
        for r in &records {
            if r.tokens.is_empty() {
                return Err(Error::Invalid(format!("record {} has no tokens", r.id)));
            }
            match label_index.get(&r.cuisine) {
                Some(&k) => targets.push(k),
                None => {
                    return Err(Error::Invalid(format!(
                        "record {} has cuisine `{}` outside the label set",
                        r.id, r.cuisine
                    )))
                }
            }
        }
        Ok(Self {
            records,
            labels,
            label_index,
            targets,
        })
    }

    pub fn records(&self) -> &[RecipeRecord] {
        &self.records
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_id(&self, cuisine: &str) -> Option<usize> {
        self.label_index.get(cuisine).copied()
    }

    /// Label id of record `i`.
    pub fn target(&self, i: usize) -> usize {
        self.targets[i]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// Records per label id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }

    pub fn into_records(self) -> Vec<RecipeRecord> {
        self.records
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown corpus format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        })
    }
}

/// A row that did not become a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowIssue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct LoadOutcome {
    pub corpus: LabeledCorpus,
    pub issues: Vec<RowIssue>,
}

pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<LoadOutcome> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let outcome = match format {
        Format::Jsonl => read_jsonl(BufReader::new(file)),
        Format::Csv => read_csv(file),
    }
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    for issue in &outcome.issues {
        log::warn!("{}:{}: {}", path.display(), issue.line, issue.message);
    }
    log::info!(
        "loaded {} records ({} labels) from {}",
        outcome.corpus.len(),
        outcome.corpus.n_classes(),
        path.display()
    );
    Ok(outcome)
}

#[derive(Deserialize)]
struct RawRow {
    id: Option<i64>,
    continent: Option<String>,
    cuisine: Option<String>,
    tokens: Option<Vec<String>>,
}

impl RawRow {
    fn into_record(self) -> std::result::Result<RecipeRecord, String> {
        let missing = |f: &str| format!("missing required field `{f}`");
        let record = RecipeRecord {
            id: self.id.ok_or_else(|| missing("id"))?,
            continent: self.continent.ok_or_else(|| missing("continent"))?,
            cuisine: self.cuisine.ok_or_else(|| missing("cuisine"))?,
            tokens: self.tokens.ok_or_else(|| missing("tokens"))?,
        };
        if record.tokens.is_empty() {
            return Err(format!("record {} has an empty token list; rejected", record.id));
        }
        Ok(record)
    }
}

pub fn read_jsonl(reader: impl BufRead) -> Result<LoadOutcome> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawRow>(&line)
            .map_err(|e| e.to_string())
            .and_then(RawRow::into_record);
        match parsed {
            Ok(r) => records.push(r),
            Err(message) => issues.push(RowIssue {
                line: line_no,
                message,
            }),
        }
    }
    Ok(LoadOutcome {
        corpus: LabeledCorpus::from_records(records)?,
        issues,
    })
}

/// CSV with header `id,continent,cuisine,tokens`; tokens are `|`-delimited.
pub fn read_csv(reader: impl Read) -> Result<LoadOutcome> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Row {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (id_c, cont_c, cuis_c, tok_c) = (col("id"), col("continent"), col("cuisine"), col("tokens"));

    let mut records = Vec::new();
    let mut issues = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                issues.push(RowIssue {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |c: Option<usize>| c.and_then(|c| row.get(c)).map(str::to_string);
        let raw = RawRow {
            id: match field(id_c) {
                Some(s) => match s.trim().parse() {
                    Ok(v) => Some(v),
                    Err(_) => {
                        issues.push(RowIssue {
                            line,
                            message: format!("id `{s}` is not an integer"),
                        });
                        continue;
                    }
                },
                None => None,
            },
            continent: field(cont_c),
            cuisine: field(cuis_c),
            tokens: field(tok_c).map(|s| {
                s.split('|')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect()
            }),
        };
        match raw.into_record() {
            Ok(r) => records.push(r),
            Err(message) => issues.push(RowIssue { line, message }),
        }
    }
    Ok(LoadOutcome {
        corpus: LabeledCorpus::from_records(records)?,
        issues,
    })
}

pub fn save_corpus(corpus: &LabeledCorpus, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    match format {
        Format::Jsonl => {
            for r in corpus.records() {
                let line = serde_json::to_string(r).map_err(|e| Error::json("record", e))?;
                writeln!(out, "{line}").map_err(io)?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            let csv_err = |e: csv::Error| Error::Invalid(e.to_string());
            w.write_record(["id", "continent", "cuisine", "tokens"]).map_err(csv_err)?;
            for r in corpus.records() {
                w.write_record([
                    r.id.to_string(),
                    r.continent.clone(),
                    r.cuisine.clone(),
                    r.tokens.join("|"),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Split proportions, e.g. `7:1:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u32,
    pub validation: u32,
    pub test: u32,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 7,
            validation: 1,
            test: 2,
        }
    }
}

impl SplitRatios {
    pub fn new(train: u32, validation: u32, test: u32) -> Result<Self> {
        let r = Self {
            train,
            validation,
            test,
        };
        if train == 0 || r.total() == 0 {
            return Err(Error::Config(format!("invalid split ratios {r}")));
        }
        Ok(r)
    }

    pub(crate) fn total(&self) -> u64 {
        u64::from(self.train) + u64::from(self.validation) + u64::from(self.test)
    }

    fn parts(&self) -> usize {
        [self.train, self.validation, self.test].iter().filter(|&&r| r > 0).count()
    }

    /// `floor(N·train)`, `floor(N·validation)`, and the remainder to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = self.total();
        let tr = (n as u64 * u64::from(self.train) / total) as usize;
        let va = (n as u64 * u64::from(self.validation) / total) as usize;
        (tr, va, n - tr - va)
    }

    /// Largest-remainder apportionment: floor every quota, then hand the
    /// leftover records to the parts with the biggest fractional remainders
    /// (ties go to the earlier part). Each part lands within 1 of its exact
    /// quota `N·ratio`.
    pub fn apportion(&self, n: usize) -> (usize, usize, usize) {
        let total = self.total();
        let w = [self.train, self.validation, self.test];
        let scaled: Vec<u64> = w.iter().map(|&r| n as u64 * u64::from(r)).collect();
        let mut size: Vec<usize> = scaled.iter().map(|&s| (s / total) as usize).collect();
        let mut order = [0usize, 1, 2];
        order.sort_by_key(|&p| std::cmp::Reverse(scaled[p] % total));
        let left = n - size.iter().sum::<usize>();
        for &p in order.iter().take(left) {
            size[p] += 1;
        }
        (size[0], size[1], size[2])
    }
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.validation, self.test)
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("split ratios must look like 7:1:2, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<u32> = parts
            .iter()
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Self::new(n[0], n[1], n[2])
    }
}

/// Three disjoint index lists covering the corpus, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl DataSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Shuffle with a seeded stream and cut. A plain split uses
/// [`SplitRatios::sizes`] on the whole corpus. A stratified one shuffles
/// each class on its own and gives it the floor or the ceiling of its quota
/// in every part, so no class strays a full record from its proportion. The
/// leftover records are placed so that the part totals equal the plain
/// rule's sizes when that is reachable, else the largest-remainder sizes,
/// else whatever per-class largest remainders add up to.
pub fn split(corpus: &LabeledCorpus, ratios: SplitRatios, seed: u64, stratified: bool) -> Result<DataSplit> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut rng = Prng::new(seed);
    let mut out = DataSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    let cut = |mut idx: Vec<usize>, (tr, va): (usize, usize), rng: &mut Prng, out: &mut DataSplit| {
        rng.shuffle(&mut idx);
        out.train.extend_from_slice(&idx[..tr]);
        out.validation.extend_from_slice(&idx[tr..tr + va]);
        out.test.extend_from_slice(&idx[tr + va..]);
    };
    if stratified {
        let mut by_class = vec![Vec::new(); corpus.n_classes()];
        for (i, &t) in corpus.targets().iter().enumerate() {
            by_class[t].push(i);
        }
        let mut groups = Vec::new();
        for (k, idx) in by_class.into_iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            if idx.len() < ratios.parts() {
                log::warn!(
                    "class `{}` has {} records, fewer than {} split parts; placed wholly in train",
                    corpus.labels()[k],
                    idx.len(),
                    ratios.parts()
                );
                out.train.extend(idx);
                continue;
            }
            groups.push(idx);
        }
        let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
        let fixed = out.train.len();
        let n = corpus.len();
        let sizes = [ratios.sizes(n), ratios.apportion(n)]
            .into_iter()
            .find_map(|(tr, va, te)| {
                let tr = tr.checked_sub(fixed)?;
                controlled_rounding(&counts, ratios, [tr, va, te])
            })
            .unwrap_or_else(|| {
                counts
                    .iter()
                    .map(|&c| {
                        let (tr, va, te) = ratios.apportion(c);
                        [tr, va, te]
                    })
                    .collect()
            });
        for (idx, s) in groups.into_iter().zip(sizes) {
            cut(idx, (s[0], s[1]), &mut rng, &mut out);
        }
    } else {
        let (tr, va, _) = ratios.sizes(corpus.len());
        cut((0..corpus.len()).collect(), (tr, va), &mut rng, &mut out);
    }
    out.train.sort_unstable();
    out.validation.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

/// Round every class's quotas `count·ratio` to their floor or ceiling so
/// that each class keeps its size and part `p` totals `target[p]`. The
/// floors are fixed first; the leftover units (one per part at most, and
/// only where the quota is fractional) are matched to parts by augmenting
/// paths. `None` when no such rounding exists.
fn controlled_rounding(counts: &[usize], ratios: SplitRatios, target: [usize; 3]) -> Option<Vec<[usize; 3]>> {
    let total = ratios.total();
    let w = [ratios.train, ratios.validation, ratios.test].map(u64::from);
    let mut sizes = Vec::with_capacity(counts.len());
    let mut open = Vec::with_capacity(counts.len());
    let mut left = Vec::with_capacity(counts.len());
    let mut need = target.map(|t| t as i64);
    for &c in counts {
        let scaled = w.map(|r| c as u64 * r);
        let floor = scaled.map(|s| (s / total) as usize);
        for p in 0..3 {
            need[p] -= floor[p] as i64;
        }
        left.push(c - floor.iter().sum::<usize>());
        open.push(scaled.map(|s| s % total != 0));
        sizes.push(floor);
    }
    if need.iter().any(|&d| d < 0) || need.iter().sum::<i64>() != left.iter().sum::<usize>() as i64 {
        return None;
    }
    let mut need = need.map(|d| d as usize);
    // taken[c][p]: class c sends its extra unit to part p.
    let mut taken = vec![[false; 3]; counts.len()];
    fn augment(c: usize, open: &[[bool; 3]], taken: &mut [[bool; 3]], need: &mut [usize; 3], seen: &mut [bool; 3]) -> bool {
        for p in 0..3 {
            if !open[c][p] || taken[c][p] || seen[p] {
                continue;
            }
            seen[p] = true;
            if need[p] > 0 {
                need[p] -= 1;
                taken[c][p] = true;
                return true;
            }
            // Part p is full: try to move one of its units elsewhere.
            for other in 0..taken.len() {
                if taken[other][p] && augment(other, open, taken, need, seen) {
                    taken[other][p] = false;
                    taken[c][p] = true;
                    return true;
                }
            }
        }
        false
    }
    for c in 0..counts.len() {
        while left[c] > 0 {
            let mut seen = [false; 3];
            if !augment(c, &open, &mut taken, &mut need, &mut seen) {
                return None;
            }
            left[c] -= 1;
        }
    }
    for (s, t) in sizes.iter_mut().zip(&taken) {
        for p in 0..3 {
            s[p] += usize::from(t[p]);
        }
    }
    Some(sizes)
}

/// On-disk form of a split: record ids rather than positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [u32; 3],
    #[serde(default = "default_true")]
    pub stratified: bool,
    pub train: Vec<i64>,
    pub validation: Vec<i64>,
    pub test: Vec<i64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" | "val" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(Error::Config(format!("unknown partition `{other}`"))),
        }
    }
}

impl SplitManifest {
    pub fn from_split(corpus: &LabeledCorpus, split: &DataSplit, ratios: SplitRatios, seed: u64, stratified: bool) -> Self {
        let ids = |idx: &[usize]| idx.iter().map(|&i| corpus.records()[i].id).collect();
        Self {
            seed,
            ratios: [ratios.train, ratios.validation, ratios.test],
            stratified,
            train: ids(&split.train),
            validation: ids(&split.validation),
            test: ids(&split.test),
        }
    }

    pub fn ids(&self, which: Partition) -> &[i64] {
        match which {
            Partition::Train => &self.train,
            Partition::Validation => &self.validation,
            Partition::Test => &self.test,
        }
    }

    /// Check the three id lists are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(*id) {
                return Err(Error::Invalid(format!(
                    "split manifest lists record {id} more than once"
                )));
            }
        }
        Ok(())
    }

    /// Map ids back to corpus positions. Ids absent from the corpus (for
    /// instance dropped by preprocessing) are skipped with a warning.
    pub fn resolve(&self, corpus: &LabeledCorpus) -> Result<DataSplit> {
        self.validate()?;
        let mut pos = HashMap::with_capacity(corpus.len());
        for (i, r) in corpus.records().iter().enumerate() {
            if pos.insert(r.id, i).is_some() {
                return Err(Error::Invalid(format!(
                    "record id {} appears twice in the corpus; splits need unique ids",
                    r.id
                )));
            }
        }
        let mut missing = 0;
        let mut map = |ids: &[i64]| -> Vec<usize> {
            let mut v: Vec<usize> = ids
                .iter()
                .filter_map(|id| {
                    let p = pos.get(id).copied();
                    if p.is_none() {
                        missing += 1;
                    }
                    p
                })
                .collect();
            v.sort_unstable();
            v
        };
        let split = DataSplit {
            train: map(&self.train),
            validation: map(&self.validation),
            test: map(&self.test),
        };
        if missing > 0 {
            log::warn!("{missing} split ids are not in the corpus and were skipped");
        }
        Ok(split)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json("split manifest", e))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::json("split manifest", e))?;
        m.validate()?;
        Ok(m)
    }
}

/// Total occurrences of every distinct token, first-occurrence order.
pub fn token_counts(corpus: &LabeledCorpus) -> Vec<(String, usize)> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for r in corpus.records() {
        for t in &r.tokens {
            match index.get(t.as_str()) {
                Some(&i) => counts[i].1 += 1,
                None => {
                    index.insert(t, counts.len());
                    counts.push((t.clone(), 1));
                }
            }
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyRow {
    pub threshold: usize,
    /// Distinct tokens occurring more than `threshold` times.
    pub above: usize,
    /// Distinct tokens occurring fewer than `threshold` times.
    pub below: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyReport {
    pub rows: Vec<FrequencyRow>,
    pub distinct_tokens: usize,
    pub total_occurrences: usize,
}

impl FrequencyReport {
    pub fn row(&self, threshold: usize) -> Option<&FrequencyRow> {
        self.rows.iter().find(|r| r.threshold == threshold)
    }
}

pub fn frequency_table(corpus: &LabeledCorpus, thresholds: &[usize]) -> Result<FrequencyReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: Vec<usize> = token_counts(corpus).into_iter().map(|(_, c)| c).collect();
    counts.sort_unstable();
    let rows = thresholds
        .iter()
        .map(|&t| FrequencyRow {
            threshold: t,
            above: counts.len() - counts.partition_point(|&c| c <= t),
            below: counts.partition_point(|&c| c < t),
        })
        .collect();
    Ok(FrequencyReport {
        rows,
        distinct_tokens: counts.len(),
        total_occurrences: counts.iter().sum(),
    })
}

/// Fraction of zeros in the binary document × distinct-token incidence
/// matrix.
pub fn sparsity_ratio(corpus: &LabeledCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut vocab: HashSet<&str> = HashSet::new();
    let mut incidences = 0usize;
    for r in corpus.records() {
        let distinct: HashSet<&str> = r.tokens.iter().map(String::as_str).collect();
        incidences += distinct.len();
        vocab.extend(distinct);
    }
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Ok(1.0 - incidences as f64 / (corpus.len() as f64 * vocab.len() as f64))
}

const SYLLABLES: [&str; 8] = ["ka", "lo", "mi", "nu", "po", "ri", "ta", "vu"];

/// A pronounceable word for `i`, spelled so that cleaning and lemmatizing
/// leave it untouched.
fn synthetic_word(mut i: usize) -> String {
    let mut w = String::new();
    loop {
        w.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
        if i == 0 {
            return w;
        }
    }
}

/// A seeded corpus in which every record carries exactly one token unique
/// to its class (`mark<word>`) among 5 to 11 tokens from a shared pool of
/// 40. Classes take turns, so counts differ by at most one.
pub fn marker_corpus(n_records: usize, n_classes: usize, seed: u64) -> Result<LabeledCorpus> {
    if n_classes == 0 || n_records < n_classes {
        return Err(Error::Invalid(format!("{n_records} records cannot cover {n_classes} classes")));
    }
    let mut rng = Prng::new(seed);
    let records = (0..n_records)
        .map(|i| {
            let k = i % n_classes;
            let mut tokens: Vec<String> = (0..5 + rng.below(7)).map(|_| synthetic_word(rng.below(40) + 8)).collect();
            let at = rng.below(tokens.len() + 1);
            tokens.insert(at, format!("mark{}", synthetic_word(k)));
            RecipeRecord {
                id: i as i64 + 1,
                continent: "Synthetic".into(),
                cuisine: format!("cuisine {}", synthetic_word(k)),
                tokens,
            }
        })
        .collect();
    LabeledCorpus::from_records(records)
}
