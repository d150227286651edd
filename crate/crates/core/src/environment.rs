//! Dataset model and domain-mixture stream scheduling.
//!
//! A dataset is a list of [`EvalRecord`]s sharing one [`ArmCatalog`]. Records
//! live on disk as line-delimited JSON, one record per line, with fields
//! `id`, `domain`, `source`, `ref`, `scores`, `hyps`, `emb` (the last three
//! arrays in catalog order, `ref`/`hyps`/`emb` optional). Token fields are
//! space-separated pre-tokenized text.
//!
//! A [`SchedulePlan`] turns a dataset into a [`ScheduledStream`]: the
//! deterministic order in which a simulation consumes records. Identical
//! `(dataset, plan, seed)` always yield the identical order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from dataset construction, loading, and validation.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: `{field}` has {got} entries, expected {expected} (one per arm)")]
    ArmCountMismatch {
        line: usize,
        field: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("line {line}: score {value} for arm {arm} outside [0,100]")]
    ScoreOutOfRange { line: usize, arm: usize, value: f64 },

    #[error("line {line}: `{field}` must not be empty")]
    EmptyField { line: usize, field: &'static str },

    #[error("arm catalog needs at least 2 arms, got {0}")]
    TooFewArms(usize),

    #[error("duplicate arm name `{0}` in catalog")]
    DuplicateArm(String),
}

/// Per-record violation, independent of file position.
#[derive(Debug, Error)]
pub enum RecordViolation {
    #[error("`{field}` has {got} entries, expected {expected} (one per arm)")]
    ArmCountMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("score {value} for arm {arm} outside [0,100]")]
    ScoreOutOfRange { arm: usize, value: f64 },
    #[error("`{field}` must not be empty")]
    EmptyField { field: &'static str },
}

impl RecordViolation {
    fn at_line(self, line: usize) -> DataError {
        match self {
            RecordViolation::ArmCountMismatch {
                field,
                expected,
                got,
            } => DataError::ArmCountMismatch {
                line,
                field,
                expected,
                got,
            },
            RecordViolation::ScoreOutOfRange { arm, value } => {
                DataError::ScoreOutOfRange { line, arm, value }
            }
            RecordViolation::EmptyField { field } => DataError::EmptyField { line, field },
        }
    }
}

/// The ordered set of selectable translation systems.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmCatalog {
    names: Vec<String>,
}

impl ArmCatalog {
    /// Builds a catalog; names must be unique and number at least two.
    pub fn new<I, S>(names: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(DataError::TooFewArms(names.len()));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(DataError::DuplicateArm(name.clone()));
            }
        }
        Ok(Self { names })
    }

    /// Number of arms `K`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Arm names in catalog order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One source example with its per-arm quality scores.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub domain: String,
    pub source_tokens: Vec<String>,
    pub reference_tokens: Option<Vec<String>>,
    /// Sentence-level score per arm, on the 0-100 scale, in catalog order.
    pub arm_scores: Vec<f64>,
    /// Hypothesis tokens per arm, when the translations themselves are kept.
    pub arm_hypotheses: Option<Vec<Vec<String>>>,
    pub embedding: Option<Vec<f64>>,
}

impl EvalRecord {
    /// Checks the record invariants against an expected arm count.
    pub fn validate(&self, arms: usize) -> Result<(), RecordViolation> {
        if self.source_tokens.is_empty() {
            return Err(RecordViolation::EmptyField { field: "source" });
        }
        if let Some(reference) = &self.reference_tokens {
            if reference.is_empty() {
                return Err(RecordViolation::EmptyField { field: "ref" });
            }
        }
        if self.arm_scores.len() != arms {
            return Err(RecordViolation::ArmCountMismatch {
                field: "scores",
                expected: arms,
                got: self.arm_scores.len(),
            });
        }
        for (arm, &value) in self.arm_scores.iter().enumerate() {
            if !(0.0..=100.0).contains(&value) || value.is_nan() {
                return Err(RecordViolation::ScoreOutOfRange { arm, value });
            }
        }
        if let Some(hyps) = &self.arm_hypotheses {
            if hyps.len() != arms {
                return Err(RecordViolation::ArmCountMismatch {
                    field: "hyps",
                    expected: arms,
                    got: hyps.len(),
                });
            }
        }
        Ok(())
    }

    /// Index of the highest-scoring arm; ties go to the lowest index.
    pub fn best_arm(&self) -> usize {
        let mut best = 0;
        for (k, &s) in self.arm_scores.iter().enumerate() {
            if s > self.arm_scores[best] {
                best = k;
            }
        }
        best
    }
}

fn split_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// On-disk shape of one record line. Field names are part of the format.
#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    domain: String,
    source: String,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    reference: Option<String>,
    scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hyps: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emb: Option<Vec<f64>>,
}

impl From<&EvalRecord> for RecordLine {
    fn from(r: &EvalRecord) -> Self {
        RecordLine {
            id: r.id.clone(),
            domain: r.domain.clone(),
            source: r.source_tokens.join(" "),
            reference: r.reference_tokens.as_ref().map(|t| t.join(" ")),
            scores: r.arm_scores.clone(),
            hyps: r
                .arm_hypotheses
                .as_ref()
                .map(|hs| hs.iter().map(|h| h.join(" ")).collect()),
            emb: r.embedding.clone(),
        }
    }
}

impl From<RecordLine> for EvalRecord {
    fn from(line: RecordLine) -> Self {
        EvalRecord {
            id: line.id,
            domain: line.domain,
            source_tokens: split_tokens(&line.source),
            reference_tokens: line.reference.as_deref().map(split_tokens),
            arm_scores: line.scores,
            arm_hypotheses: line
                .hyps
                .map(|hs| hs.iter().map(|h| split_tokens(h)).collect()),
            embedding: line.emb,
        }
    }
}

/// An immutable, validated collection of records over one arm catalog.
#[derive(Debug, Clone)]
pub struct Dataset {
    catalog: ArmCatalog,
    records: Vec<EvalRecord>,
}

impl Dataset {
    /// Validates every record against the catalog and wraps them up.
    pub fn new(catalog: ArmCatalog, records: Vec<EvalRecord>) -> Result<Self, DataError> {
        let arms = catalog.len();
        for (i, record) in records.iter().enumerate() {
            record.validate(arms).map_err(|v| v.at_line(i + 1))?;
        }
        Ok(Self { catalog, records })
    }

    /// Loads a line-delimited dataset file, validating every record.
    ///
    /// Errors carry 1-based line numbers.
    pub fn load(path: &Path, catalog: ArmCatalog) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read(BufReader::new(file), catalog).map_err(|e| match e {
            DataError::Io { source, .. } => DataError::Io {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    /// Reads dataset lines from any reader.
    pub fn read<R: Read>(reader: R, catalog: ArmCatalog) -> Result<Self, DataError> {
        let arms = catalog.len();
        let mut records = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| DataError::Io {
                path: String::from("<reader>"),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine =
                serde_json::from_str(&line).map_err(|e| DataError::MalformedLine {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let record = EvalRecord::from(parsed);
            record.validate(arms).map_err(|v| v.at_line(line_no))?;
            records.push(record);
        }
        Ok(Self { catalog, records })
    }

    /// Writes the dataset in the line-delimited format.
    pub fn write<W: Write>(&self, writer: W) -> std::io::Result<()> {
        write_records(&self.records, writer)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let file = File::create(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.write(file).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// The dataset serialized to a single string, one record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        self.write(&mut out).expect("in-memory write cannot fail");
        String::from_utf8(out).expect("serialized records are UTF-8")
    }

    pub fn records(&self) -> &[EvalRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn catalog(&self) -> &ArmCatalog {
        &self.catalog
    }

    pub fn arm_count(&self) -> usize {
        self.catalog.len()
    }

    /// Distinct domain labels in order of first appearance.
    pub fn domains(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for record in &self.records {
            if !seen.contains(&record.domain) {
                seen.push(record.domain.clone());
            }
        }
        seen
    }

    /// Record indices per domain, in file order.
    pub fn domain_indices(&self) -> BTreeMap<String, Vec<usize>> {
        let mut map: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, record) in self.records.iter().enumerate() {
            map.entry(record.domain.clone()).or_default().push(i);
        }
        map
    }
}

/// Writes records in the line-delimited format without requiring a catalog.
///
/// Useful for score matrices with a single arm, which cannot form a
/// [`Dataset`] (catalogs need two arms).
pub fn write_records<W: Write>(records: &[EvalRecord], writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for record in records {
        let line = serde_json::to_string(&RecordLine::from(record))
            .expect("record serialization cannot fail");
        writeln!(w, "{line}")?;
    }
    w.flush()
}

/// Errors from schedule construction.
#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("plan references domain `{0}` with no records in the dataset")]
    EmptyDomain(String),

    #[error("block_size must be at least 1")]
    InvalidBlockSize,

    #[error("domain_order must not be empty")]
    EmptyDomainOrder,

    #[error("mixture weight for `{domain}` is {weight}; weights must be finite and >= 0")]
    InvalidWeight { domain: String, weight: f64 },

    #[error("mixture weights must sum to a positive value")]
    NoPositiveWeight,

    #[error("cannot schedule an empty dataset")]
    EmptyDataset,
}

/// How a dataset is ordered into a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulePlan {
    /// File order, unchanged.
    Sequential,
    /// Fixed-size single-domain blocks cycling through `domain_order`.
    ///
    /// Each domain keeps a cursor over its own records in file order,
    /// wrapping when exhausted, so small domains recycle. The stream stops
    /// at exactly the dataset size.
    CyclicBlocks {
        block_size: usize,
        domain_order: Vec<String>,
    },
    /// Seeded interleaving of domains by weight, without replacement.
    ///
    /// At each step a domain is drawn with probability proportional to its
    /// weight among domains that still have records, then a uniformly random
    /// remaining record of that domain is emitted. Every record of a
    /// weighted domain appears exactly once; domains absent from the map are
    /// excluded from the stream.
    ShuffledMixture {
        mixture_ratios: BTreeMap<String, f64>,
        #[serde(default)]
        seed: u64,
    },
}

/// A concrete record order over a dataset, consumed once.
#[derive(Debug)]
pub struct ScheduledStream<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> ScheduledStream<'a> {
    /// The full index order this stream will emit.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Steps remaining from the cursor.
    pub fn remaining(&self) -> usize {
        self.order.len() - self.cursor
    }
}

impl<'a> Iterator for ScheduledStream<'a> {
    type Item = (usize, &'a EvalRecord);

    fn next(&mut self) -> Option<Self::Item> {
        let idx = *self.order.get(self.cursor)?;
        self.cursor += 1;
        Some((idx, &self.dataset.records()[idx]))
    }
}

/// Builds the deterministic record order for a plan.
pub fn build_schedule<'a>(
    dataset: &'a Dataset,
    plan: &SchedulePlan,
) -> Result<ScheduledStream<'a>, ScheduleError> {
    if dataset.is_empty() {
        return Err(ScheduleError::EmptyDataset);
    }
    let order = match plan {
        SchedulePlan::Sequential => (0..dataset.len()).collect(),
        SchedulePlan::CyclicBlocks {
            block_size,
            domain_order,
        } => cyclic_order(dataset, *block_size, domain_order)?,
        SchedulePlan::ShuffledMixture {
            mixture_ratios,
            seed,
        } => shuffled_order(dataset, mixture_ratios, *seed)?,
    };
    Ok(ScheduledStream {
        dataset,
        order,
        cursor: 0,
    })
}

fn cyclic_order(
    dataset: &Dataset,
    block_size: usize,
    domain_order: &[String],
) -> Result<Vec<usize>, ScheduleError> {
    if block_size == 0 {
        return Err(ScheduleError::InvalidBlockSize);
    }
    if domain_order.is_empty() {
        return Err(ScheduleError::EmptyDomainOrder);
    }
    let by_domain = dataset.domain_indices();
    let mut pools: Vec<&[usize]> = Vec::with_capacity(domain_order.len());
    for domain in domain_order {
        let indices = by_domain
            .get(domain)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ScheduleError::EmptyDomain(domain.clone()))?;
        pools.push(indices);
    }
    let total = dataset.len();
    let mut cursors = vec![0usize; domain_order.len()];
    let mut order = Vec::with_capacity(total);
    let mut block = 0usize;
    while order.len() < total {
        let slot = block % domain_order.len();
        let pool = pools[slot];
        for _ in 0..block_size {
            if order.len() == total {
                break;
            }
            order.push(pool[cursors[slot] % pool.len()]);
            cursors[slot] += 1;
        }
        block += 1;
    }
    Ok(order)
}

fn shuffled_order(
    dataset: &Dataset,
    mixture_ratios: &BTreeMap<String, f64>,
    seed: u64,
) -> Result<Vec<usize>, ScheduleError> {
    let by_domain = dataset.domain_indices();
    // BTreeMap iteration gives a stable domain order, which the draws below
    // depend on.
    let mut queues: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut total_weight = 0.0;
    for (domain, &weight) in mixture_ratios {
        if !weight.is_finite() || weight < 0.0 {
            return Err(ScheduleError::InvalidWeight {
                domain: domain.clone(),
                weight,
            });
        }
        let indices = by_domain
            .get(domain)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ScheduleError::EmptyDomain(domain.clone()))?;
        if weight > 0.0 {
            total_weight += weight;
            queues.push((weight, indices.clone()));
        }
    }
    if total_weight <= 0.0 {
        return Err(ScheduleError::NoPositiveWeight);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let total: usize = queues.iter().map(|(_, q)| q.len()).sum();
    let mut order = Vec::with_capacity(total);
    while order.len() < total {
        let live_weight: f64 = queues
            .iter()
            .filter(|(_, q)| !q.is_empty())
            .map(|(w, _)| w)
            .sum();
        let mut draw = rng.random::<f64>() * live_weight;
        let mut picked = None;
        for (slot, (weight, queue)) in queues.iter().enumerate() {
            if queue.is_empty() {
                continue;
            }
            picked = Some(slot);
            draw -= weight;
            if draw < 0.0 {
                break;
            }
        }
        let slot = picked.expect("at least one non-empty queue remains");
        let queue = &mut queues[slot].1;
        let j = rng.random_range(0..queue.len());
        order.push(queue.swap_remove(j));
    }
    Ok(order)
}
