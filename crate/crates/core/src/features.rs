//! Context vectors for contextual policies.
//!
//! A feature vector is the concatenation, in fixed order, of the enabled
//! blocks [bias, oov, len, emb]: a constant 1.0, a binary
//! out-of-vocabulary indicator, a one-hot sentence-length bin, and a prefix
//! of the record's embedding. Block widths depend only on the config, so
//! every record in a run featurizes to the same length.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EvalRecord;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("at least one feature block must be enabled")]
    NoBlocks,

    #[error("oov block requires a vocabulary")]
    OovNeedsVocab,

    #[error("oov_threshold {0} outside [0,1]")]
    BadThreshold(f64),

    #[error("len_bin_edges must be strictly ascending positive integers")]
    BadEdges,

    #[error("emb_prefix_len must be at least 1")]
    BadPrefixLen,

    #[error("record `{id}` has no embedding but the emb block is enabled")]
    MissingEmbedding { id: String },

    #[error("record `{id}` embedding has {got} dims, need {needed}")]
    EmbeddingTooShort {
        id: String,
        needed: usize,
        got: usize,
    },

    #[error("token list must not be empty")]
    EmptyTokens,

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The four feature blocks, applied in this order regardless of how the
/// config lists them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureBlock {
    Bias,
    Oov,
    Len,
    Emb,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 4] = [
        FeatureBlock::Bias,
        FeatureBlock::Oov,
        FeatureBlock::Len,
        FeatureBlock::Emb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureBlock::Bias => "bias",
            FeatureBlock::Oov => "oov",
            FeatureBlock::Len => "len",
            FeatureBlock::Emb => "emb",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeatureConfig {
    pub blocks: Vec<FeatureBlock>,
    pub vocab: Option<HashSet<String>>,
    /// OOV indicator fires when the OOV rate exceeds this.
    pub oov_threshold: f64,
    /// Upper bounds of the length bins; one overflow bin is appended.
    pub len_bin_edges: Vec<usize>,
    /// How many leading embedding components to copy.
    pub emb_prefix_len: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            blocks: vec![FeatureBlock::Bias],
            vocab: None,
            oov_threshold: 0.1,
            len_bin_edges: vec![5, 10, 15, 20],
            emb_prefix_len: 50,
        }
    }
}

impl FeatureConfig {
    pub fn has(&self, block: FeatureBlock) -> bool {
        self.blocks.contains(&block)
    }

    fn block_width(&self, block: FeatureBlock) -> usize {
        match block {
            FeatureBlock::Bias | FeatureBlock::Oov => 1,
            FeatureBlock::Len => self.len_bin_edges.len() + 1,
            FeatureBlock::Emb => self.emb_prefix_len,
        }
    }

    /// Total vector width; depends only on the config.
    pub fn width(&self) -> usize {
        FeatureBlock::ALL
            .iter()
            .filter(|b| self.has(**b))
            .map(|b| self.block_width(*b))
            .sum()
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.blocks.is_empty() {
            return Err(FeatureError::NoBlocks);
        }
        if self.has(FeatureBlock::Oov) && self.vocab.is_none() {
            return Err(FeatureError::OovNeedsVocab);
        }
        if !(0.0..=1.0).contains(&self.oov_threshold) || self.oov_threshold.is_nan() {
            return Err(FeatureError::BadThreshold(self.oov_threshold));
        }
        if self.has(FeatureBlock::Len) {
            let edges = &self.len_bin_edges;
            if edges.is_empty()
                || edges[0] == 0
                || edges.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(FeatureError::BadEdges);
            }
        }
        if self.has(FeatureBlock::Emb) && self.emb_prefix_len == 0 {
            return Err(FeatureError::BadPrefixLen);
        }
        Ok(())
    }
}

/// A featurized record: dense values plus where each block landed.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    layout: Vec<(FeatureBlock, Range<usize>)>,
}

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index range of a block, if enabled.
    pub fn block_range(&self, block: FeatureBlock) -> Option<Range<usize>> {
        self.layout
            .iter()
            .find(|(b, _)| *b == block)
            .map(|(_, r)| r.clone())
    }

    pub fn layout(&self) -> &[(FeatureBlock, Range<usize>)] {
        &self.layout
    }
}

/// Fraction of tokens absent from the vocabulary.
pub fn oov_rate<S: AsRef<str>>(tokens: &[S], vocab: &HashSet<String>) -> Result<f64, FeatureError> {
    if tokens.is_empty() {
        return Err(FeatureError::EmptyTokens);
    }
    let out = tokens
        .iter()
        .filter(|t| !vocab.contains(t.as_ref()))
        .count();
    Ok(out as f64 / tokens.len() as f64)
}

/// Loads a vocabulary file: one token per line, blank lines ignored.
pub fn load_vocab(path: &Path) -> Result<HashSet<String>, FeatureError> {
    let file = File::open(path).map_err(|source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut vocab = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| FeatureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let token = line.trim();
        if !token.is_empty() {
            vocab.insert(token.to_owned());
        }
    }
    Ok(vocab)
}

/// Computes the context vector for one record.
pub fn featurize(record: &EvalRecord, config: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    config.validate()?;
    let mut values = Vec::with_capacity(config.width());
    let mut layout = Vec::new();

    for block in FeatureBlock::ALL {
        if !config.has(block) {
            continue;
        }
        let start = values.len();
        match block {
            FeatureBlock::Bias => values.push(1.0),
            FeatureBlock::Oov => {
                let vocab = config.vocab.as_ref().expect("validated above");
                let rate = oov_rate(&record.source_tokens, vocab)?;
                values.push(if rate > config.oov_threshold { 1.0 } else { 0.0 });
            }
            FeatureBlock::Len => {
                let edges = &config.len_bin_edges;
                let len = record.source_tokens.len();
                let bin = edges.partition_point(|&edge| len > edge);
                for i in 0..=edges.len() {
                    values.push(if i == bin { 1.0 } else { 0.0 });
                }
            }
            FeatureBlock::Emb => {
                let emb = record
                    .embedding
                    .as_ref()
                    .ok_or_else(|| FeatureError::MissingEmbedding {
                        id: record.id.clone(),
                    })?;
                if emb.len() < config.emb_prefix_len {
                    return Err(FeatureError::EmbeddingTooShort {
                        id: record.id.clone(),
                        needed: config.emb_prefix_len,
                        got: emb.len(),
                    });
                }
                values.extend_from_slice(&emb[..config.emb_prefix_len]);
            }
        }
        layout.push((block, start..values.len()));
    }

    debug_assert_eq!(values.len(), config.width());
    Ok(FeatureVector { values, layout })
}
