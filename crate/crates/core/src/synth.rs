//! Synthetic multi-domain datasets with a controlled per-arm mean
//! structure, so experiments run without real translation systems.
//!
//! Each record draws its source length uniformly from `len_range` and each
//! arm score from N(mean, sigma^2) clipped to [0,100], where the mean
//! depends on (arm, domain). With `domain_one_hot_emb` the record carries a
//! one-hot domain embedding, giving contextual policies an informative
//! context. Per record the generator draws the length first, then the K
//! score noises, so output is reproducible from the seed alone.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{ArmCatalog, DataError, Dataset, EvalRecord};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("domain list must not be empty")]
    NoDomains,

    #[error("duplicate domain `{0}`")]
    DuplicateDomain(String),

    #[error("records_per_domain must be at least 1")]
    NoRecords,

    #[error("no means given for domain `{0}`")]
    MissingMeans(String),

    #[error("means for unknown domain `{0}`")]
    UnknownMeansDomain(String),

    #[error("domain `{domain}` has {got} means, expected {expected} (one per arm)")]
    WrongMeanCount {
        domain: String,
        expected: usize,
        got: usize,
    },

    #[error("mean {value} for arm {arm} in domain `{domain}` outside [0,100]")]
    MeanOutOfRange {
        domain: String,
        arm: usize,
        value: f64,
    },

    #[error("noise_sigma must be finite and nonnegative, got {0}")]
    BadSigma(f64),

    #[error("len_range ({min},{max}) needs 1 <= min <= max")]
    BadLenRange { min: usize, max: usize },

    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Arm names, in catalog order.
    pub arms: Vec<String>,
    /// Domains, in generation order.
    pub domains: Vec<String>,
    /// Per-domain mean score of each arm, in arm order.
    pub means: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub noise_sigma: f64,
    pub records_per_domain: usize,
    #[serde(default)]
    pub seed: u64,
    /// Inclusive bounds on source token counts.
    #[serde(default = "default_len_range")]
    pub len_range: (usize, usize),
    /// Attach a one-hot domain embedding to every record.
    #[serde(default = "default_one_hot")]
    pub domain_one_hot_emb: bool,
}

fn default_len_range() -> (usize, usize) {
    (4, 24)
}

fn default_one_hot() -> bool {
    true
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.domains.is_empty() {
            return Err(SynthError::NoDomains);
        }
        for (i, domain) in self.domains.iter().enumerate() {
            if self.domains[..i].contains(domain) {
                return Err(SynthError::DuplicateDomain(domain.clone()));
            }
        }
        if self.records_per_domain == 0 {
            return Err(SynthError::NoRecords);
        }
        for domain in self.means.keys() {
            if !self.domains.contains(domain) {
                return Err(SynthError::UnknownMeansDomain(domain.clone()));
            }
        }
        for domain in &self.domains {
            let means = self
                .means
                .get(domain)
                .ok_or_else(|| SynthError::MissingMeans(domain.clone()))?;
            if means.len() != self.arms.len() {
                return Err(SynthError::WrongMeanCount {
                    domain: domain.clone(),
                    expected: self.arms.len(),
                    got: means.len(),
                });
            }
            for (arm, &value) in means.iter().enumerate() {
                if !(0.0..=100.0).contains(&value) || value.is_nan() {
                    return Err(SynthError::MeanOutOfRange {
                        domain: domain.clone(),
                        arm,
                        value,
                    });
                }
            }
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(SynthError::BadSigma(self.noise_sigma));
        }
        let (min, max) = self.len_range;
        if min == 0 || min > max {
            return Err(SynthError::BadLenRange { min, max });
        }
        Ok(())
    }
}

/// Generates the dataset described by the spec, deterministically.
pub fn generate(spec: &SynthSpec) -> Result<Dataset, SynthError> {
    spec.validate()?;
    let catalog = ArmCatalog::new(spec.arms.iter().cloned())?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let (min_len, max_len) = spec.len_range;
    let mut records = Vec::with_capacity(spec.domains.len() * spec.records_per_domain);

    for (d, domain) in spec.domains.iter().enumerate() {
        let means = &spec.means[domain];
        let embedding = spec.domain_one_hot_emb.then(|| {
            let mut e = vec![0.0; spec.domains.len()];
            e[d] = 1.0;
            e
        });
        for i in 0..spec.records_per_domain {
            let len = rng.random_range(min_len..=max_len);
            let source_tokens = (0..len).map(|j| format!("{domain}_w{j}")).collect();
            let arm_scores = means
                .iter()
                .map(|&mean| {
                    let z: f64 = rng.sample(StandardNormal);
                    (mean + spec.noise_sigma * z).clamp(0.0, 100.0)
                })
                .collect();
            records.push(EvalRecord {
                id: format!("{domain}-{}", i + 1),
                domain: domain.clone(),
                source_tokens,
                reference_tokens: None,
                arm_scores,
                arm_hypotheses: None,
                embedding: embedding.clone(),
            });
        }
    }
    Ok(Dataset::new(catalog, records)?)
}
