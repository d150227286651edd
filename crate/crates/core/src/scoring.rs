//! Sentence-level and corpus-level BLEU over pre-tokenized text.
//!
//! Sentence scores use BLEU-4 with add-one smoothing on the numerator and
//! denominator of orders 2..4 (order 1 stays unsmoothed, so a hypothesis
//! with no unigram matches scores 0). Corpus scores aggregate matched and
//! total counts across all pairs first and apply no smoothing; orders for
//! which the whole corpus has no hypothesis n-grams are left out of the
//! geometric mean. Tokenization is out of scope: callers pass
//! whitespace-split tokens.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::environment::EvalRecord;

/// BLEU's maximum n-gram order.
pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum BleuError {
    #[error("reference must not be empty")]
    EmptyReference,

    #[error("pair {pair}: reference must not be empty")]
    EmptyReferenceAt { pair: usize },

    #[error("corpus must contain at least one pair")]
    EmptyCorpus,

    #[error("score {0} outside [0,100]")]
    ScoreOutOfRange(f64),

    #[error("`{file}` has {lines} lines but reference `{reference}` has {expected}")]
    LineCountMismatch {
        file: String,
        lines: usize,
        reference: String,
        expected: usize,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// N-gram occurrence counts of one token sequence, orders 1..=4.
#[derive(Debug, Clone)]
pub struct NGramCounts {
    // Tokens come whitespace-split, so a space join is an injective key.
    orders: [HashMap<String, u64>; MAX_ORDER],
    token_len: usize,
}

impl NGramCounts {
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut orders: [HashMap<String, u64>; MAX_ORDER] = Default::default();
        for (n, counts) in orders.iter_mut().enumerate() {
            let width = n + 1;
            if tokens.len() < width {
                break;
            }
            for window in tokens.windows(width) {
                let key = window
                    .iter()
                    .map(AsRef::as_ref)
                    .collect::<Vec<_>>()
                    .join(" ");
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        Self {
            orders,
            token_len: tokens.len(),
        }
    }

    pub fn token_len(&self) -> usize {
        self.token_len
    }

    /// Total n-grams of order `n` (1-based): max(0, len − n + 1).
    pub fn total(&self, n: usize) -> u64 {
        assert!((1..=MAX_ORDER).contains(&n));
        self.token_len.saturating_sub(n - 1) as u64
    }

    /// Clipped matches of order `n`: sum over distinct hypothesis n-grams of
    /// min(count here, count in reference). `self` is the hypothesis side.
    pub fn clipped_matches(&self, reference: &NGramCounts, n: usize) -> u64 {
        assert!((1..=MAX_ORDER).contains(&n));
        self.orders[n - 1]
            .iter()
            .map(|(gram, &count)| {
                let in_ref = reference.orders[n - 1].get(gram).copied().unwrap_or(0);
                count.min(in_ref)
            })
            .sum()
    }
}

/// Full per-order accounting behind a BLEU score.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuBreakdown {
    /// Clipped matches per order, index 0 = unigrams.
    pub matched: [u64; MAX_ORDER],
    /// Total hypothesis n-grams per order.
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
    /// exp(1 − ref/hyp) when hyp is shorter, else 1. Reported as 1 for an
    /// empty hypothesis, whose score is 0 by definition.
    pub brevity_penalty: f64,
    /// Final BLEU in [0,100].
    pub score: f64,
}

fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 || hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Smoothed BLEU-4 on one hypothesis/reference pair.
///
/// An empty hypothesis scores 0; an empty reference is an error.
pub fn sentence_bleu<S, R>(hyp: &[S], reference: &[R]) -> Result<BleuBreakdown, BleuError>
where
    S: AsRef<str>,
    R: AsRef<str>,
{
    if reference.is_empty() {
        return Err(BleuError::EmptyReference);
    }
    let hyp_counts = NGramCounts::from_tokens(hyp);
    let ref_counts = NGramCounts::from_tokens(reference);

    let mut matched = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    for n in 1..=MAX_ORDER {
        matched[n - 1] = hyp_counts.clipped_matches(&ref_counts, n);
        totals[n - 1] = hyp_counts.total(n);
    }

    let bp = brevity_penalty(hyp.len(), reference.len());
    let score = if hyp.is_empty() || matched[0] == 0 {
        0.0
    } else {
        let mut log_sum = (matched[0] as f64 / totals[0] as f64).ln();
        for n in 2..=MAX_ORDER {
            log_sum += ((matched[n - 1] + 1) as f64 / (totals[n - 1] + 1) as f64).ln();
        }
        100.0 * bp * (log_sum / MAX_ORDER as f64).exp()
    };

    Ok(BleuBreakdown {
        matched,
        totals,
        hyp_len: hyp.len(),
        ref_len: reference.len(),
        brevity_penalty: bp,
        score,
    })
}

/// Unsmoothed corpus BLEU over aggregated counts.
///
/// Orders with zero hypothesis n-grams corpus-wide are excluded from the
/// geometric mean; if any included order has zero matches the score is 0.
pub fn corpus_bleu<'a, I, S, R>(pairs: I) -> Result<BleuBreakdown, BleuError>
where
    I: IntoIterator<Item = (&'a [S], &'a [R])>,
    S: AsRef<str> + 'a,
    R: AsRef<str> + 'a,
{
    let mut matched = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    let mut pair_count = 0usize;

    for (hyp, reference) in pairs {
        if reference.is_empty() {
            return Err(BleuError::EmptyReferenceAt { pair: pair_count });
        }
        let hyp_counts = NGramCounts::from_tokens(hyp);
        let ref_counts = NGramCounts::from_tokens(reference);
        for n in 1..=MAX_ORDER {
            matched[n - 1] += hyp_counts.clipped_matches(&ref_counts, n);
            totals[n - 1] += hyp_counts.total(n);
        }
        hyp_len += hyp.len();
        ref_len += reference.len();
        pair_count += 1;
    }
    if pair_count == 0 {
        return Err(BleuError::EmptyCorpus);
    }

    let bp = brevity_penalty(hyp_len, ref_len);
    let mut log_sum = 0.0;
    let mut included = 0usize;
    let mut zero_precision = hyp_len == 0;
    for n in 1..=MAX_ORDER {
        if totals[n - 1] == 0 {
            continue;
        }
        included += 1;
        if matched[n - 1] == 0 {
            zero_precision = true;
        } else {
            log_sum += (matched[n - 1] as f64 / totals[n - 1] as f64).ln();
        }
    }
    let score = if zero_precision || included == 0 {
        0.0
    } else {
        100.0 * bp * (log_sum / included as f64).exp()
    };

    Ok(BleuBreakdown {
        matched,
        totals,
        hyp_len,
        ref_len,
        brevity_penalty: bp,
        score,
    })
}

/// Options for turning parallel text files into a score-matrix dataset.
#[derive(Debug, Clone)]
pub struct RewardMatrixOptions {
    /// Domain label stamped on every record.
    pub domain: String,
    /// Record ids are `{id_prefix}-{line}` (1-based).
    pub id_prefix: String,
    /// Source-side text file; when absent, reference tokens double as the
    /// source.
    pub source_path: Option<PathBuf>,
    /// Keep hypothesis tokens inside the records so a later corpus BLEU over
    /// chosen translations is possible.
    pub keep_hypotheses: bool,
}

impl Default for RewardMatrixOptions {
    fn default() -> Self {
        Self {
            domain: "default".into(),
            id_prefix: "sent".into(),
            source_path: None,
            keep_hypotheses: true,
        }
    }
}

fn read_token_lines(path: &Path) -> Result<Vec<Vec<String>>, BleuError> {
    let file = File::open(path).map_err(|source| BleuError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| BleuError::Io {
            path: path.display().to_string(),
            source,
        })?;
        lines.push(line.split_whitespace().map(str::to_owned).collect());
    }
    Ok(lines)
}

/// Scores every hypothesis file against the reference file, line by line.
///
/// `hyp_paths` pairs each arm name with its translations; all files must
/// have equal line counts, line i of every file describing the same source.
/// Returns records in the dataset line shape with
/// `arm_scores[k] = sentence_bleu(hyp_k, ref).score`.
pub fn build_reward_matrix(
    ref_path: &Path,
    hyp_paths: &[(String, PathBuf)],
    opts: &RewardMatrixOptions,
) -> Result<Vec<EvalRecord>, BleuError> {
    let references = read_token_lines(ref_path)?;
    let expected = references.len();

    let sources = match &opts.source_path {
        Some(path) => {
            let lines = read_token_lines(path)?;
            if lines.len() != expected {
                return Err(BleuError::LineCountMismatch {
                    file: path.display().to_string(),
                    lines: lines.len(),
                    reference: ref_path.display().to_string(),
                    expected,
                });
            }
            Some(lines)
        }
        None => None,
    };

    let mut arm_lines = Vec::with_capacity(hyp_paths.len());
    for (_, path) in hyp_paths {
        let lines = read_token_lines(path)?;
        if lines.len() != expected {
            return Err(BleuError::LineCountMismatch {
                file: path.display().to_string(),
                lines: lines.len(),
                reference: ref_path.display().to_string(),
                expected,
            });
        }
        arm_lines.push(lines);
    }

    let mut records = Vec::with_capacity(expected);
    for (i, reference) in references.iter().enumerate() {
        if reference.is_empty() {
            return Err(BleuError::EmptyReferenceAt { pair: i + 1 });
        }
        let mut scores = Vec::with_capacity(hyp_paths.len());
        let mut hyps = Vec::with_capacity(hyp_paths.len());
        for lines in &arm_lines {
            let hyp = &lines[i];
            scores.push(sentence_bleu(hyp, reference)?.score);
            if opts.keep_hypotheses {
                hyps.push(hyp.clone());
            }
        }
        let source_tokens = match &sources {
            Some(lines) => lines[i].clone(),
            None => reference.clone(),
        };
        records.push(EvalRecord {
            id: format!("{}-{}", opts.id_prefix, i + 1),
            domain: opts.domain.clone(),
            source_tokens,
            reference_tokens: Some(reference.clone()),
            arm_scores: scores,
            arm_hypotheses: opts.keep_hypotheses.then_some(hyps),
            embedding: None,
        });
    }
    Ok(records)
}
