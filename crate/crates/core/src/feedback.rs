//! Simulated user feedback: maps a raw 0-100 sentence score to the [0,1]
//! reward a policy actually observes.
//!
//! Four styles: `scale` divides by 100; `granular` buckets into a 1..bins
//! star rating and returns rating/bins; `variance` adds Gaussian noise with
//! a per-event standard deviation sigma0 * shrink^n, clipped to [0,1];
//! `skew` compresses toward low scores by a constant factor. Noise draws
//! come from a dedicated RNG stream so feedback randomness is reproducible
//! independently of policy randomness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("score {0} outside [0,100]")]
    OutOfRange(f64),

    #[error("bins must be at least 2, got {0}")]
    BadBins(u32),

    #[error("sigma0 must be nonnegative, got {0}")]
    BadSigma(f64),

    #[error("shrink must be nonnegative, got {0}")]
    BadShrink(f64),

    #[error("skew_factor must be in (0,1], got {0}")]
    BadSkewFactor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackStyle {
    Scale,
    Granular,
    Variance,
    Skew,
}

impl FeedbackStyle {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackStyle::Scale => "scale",
            FeedbackStyle::Granular => "granular",
            FeedbackStyle::Variance => "variance",
            FeedbackStyle::Skew => "skew",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    #[serde(default = "default_style")]
    pub style: FeedbackStyle,
    #[serde(default = "default_bins")]
    pub bins: u32,
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_shrink")]
    pub shrink: f64,
    #[serde(default = "default_skew_factor")]
    pub skew_factor: f64,
    /// Added to the derived feedback-stream seed, so two runs can share a
    /// master seed but draw different noise.
    #[serde(default)]
    pub seed_offset: u64,
}

fn default_style() -> FeedbackStyle {
    FeedbackStyle::Scale
}
fn default_bins() -> u32 {
    5
}
fn default_sigma0() -> f64 {
    0.1
}
fn default_shrink() -> f64 {
    1.0
}
fn default_skew_factor() -> f64 {
    0.25
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            style: default_style(),
            bins: default_bins(),
            sigma0: default_sigma0(),
            shrink: default_shrink(),
            skew_factor: default_skew_factor(),
            seed_offset: 0,
        }
    }
}

impl FeedbackConfig {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        if self.bins < 2 {
            return Err(FeedbackError::BadBins(self.bins));
        }
        if !(self.sigma0 >= 0.0) || !self.sigma0.is_finite() {
            return Err(FeedbackError::BadSigma(self.sigma0));
        }
        if !(self.shrink >= 0.0) || !self.shrink.is_finite() {
            return Err(FeedbackError::BadShrink(self.shrink));
        }
        if !(self.skew_factor > 0.0 && self.skew_factor <= 1.0) {
            return Err(FeedbackError::BadSkewFactor(self.skew_factor));
        }
        Ok(())
    }
}

fn check_range(bleu: f64) -> Result<(), FeedbackError> {
    if !(0.0..=100.0).contains(&bleu) || bleu.is_nan() {
        return Err(FeedbackError::OutOfRange(bleu));
    }
    Ok(())
}

/// bleu / 100.
pub fn scale(bleu: f64) -> Result<f64, FeedbackError> {
    check_range(bleu)?;
    Ok(bleu / 100.0)
}

/// Equal-width bins over [0,100], top bin closed. Returns the 1-based
/// rating and the reward rating/bins.
pub fn granularize(bleu: f64, bins: u32) -> Result<(u32, f64), FeedbackError> {
    check_range(bleu)?;
    if bins < 2 {
        return Err(FeedbackError::BadBins(bins));
    }
    let width = 100.0 / f64::from(bins);
    let rating = ((bleu / width).floor() as u32 + 1).min(bins);
    Ok((rating, f64::from(rating) / f64::from(bins)))
}

/// skew_factor * bleu / 100.
pub fn skew(bleu: f64, skew_factor: f64) -> Result<f64, FeedbackError> {
    check_range(bleu)?;
    if !(skew_factor > 0.0 && skew_factor <= 1.0) {
        return Err(FeedbackError::BadSkewFactor(skew_factor));
    }
    Ok(skew_factor * bleu / 100.0)
}

/// Per-run feedback stream: the noise RNG plus the count of feedback
/// events issued so far.
#[derive(Debug, Clone)]
pub struct FeedbackState {
    config: FeedbackConfig,
    rng: ChaCha12Rng,
    events: u64,
}

impl FeedbackState {
    pub fn new(config: FeedbackConfig, seed: u64) -> Result<Self, FeedbackError> {
        config.validate()?;
        Ok(Self {
            config,
            rng: ChaCha12Rng::seed_from_u64(seed),
            events: 0,
        })
    }

    pub fn config(&self) -> &FeedbackConfig {
        &self.config
    }

    /// Feedback events issued so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// Applies the configured style to one raw score.
    pub fn apply(&mut self, bleu: f64) -> Result<f64, FeedbackError> {
        match self.config.style {
            FeedbackStyle::Scale => {
                let reward = scale(bleu)?;
                self.events += 1;
                Ok(reward)
            }
            FeedbackStyle::Granular => {
                let (_, reward) = granularize(bleu, self.config.bins)?;
                self.events += 1;
                Ok(reward)
            }
            FeedbackStyle::Variance => perturb_variance(bleu, self),
            FeedbackStyle::Skew => {
                let reward = skew(bleu, self.config.skew_factor)?;
                self.events += 1;
                Ok(reward)
            }
        }
    }
}

/// Samples N(bleu/100, sigma_n^2) clipped to [0,1], where
/// sigma_n = sigma0 * shrink^n and n is the number of feedback events
/// already issued. Consumes exactly one Gaussian draw and increments the
/// event counter.
pub fn perturb_variance(bleu: f64, state: &mut FeedbackState) -> Result<f64, FeedbackError> {
    check_range(bleu)?;
    let sigma = state.config.sigma0 * state.config.shrink.powi(state.events as i32);
    let z: f64 = state.rng.sample(StandardNormal);
    state.events += 1;
    Ok((bleu / 100.0 + sigma * z).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn variance_state(sigma0: f64, shrink: f64, seed: u64) -> FeedbackState {
        FeedbackState::new(
            FeedbackConfig {
                style: FeedbackStyle::Variance,
                sigma0,
                shrink,
                ..FeedbackConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn scale_endpoints_and_table_value() {
        assert_eq!(scale(0.0).unwrap(), 0.0);
        assert_eq!(scale(100.0).unwrap(), 1.0);
        assert!((scale(29.4).unwrap() - 0.294).abs() < 1e-15);
        assert!(matches!(scale(100.5), Err(FeedbackError::OutOfRange(_))));
        assert!(matches!(scale(-0.1), Err(FeedbackError::OutOfRange(_))));
    }

    #[test]
    fn granular_bins_and_endpoints() {
        assert_eq!(granularize(0.0, 5).unwrap(), (1, 0.2));
        assert_eq!(granularize(100.0, 5).unwrap(), (5, 1.0));
        // floor(37/20) + 1 = 2.
        assert_eq!(granularize(37.0, 5).unwrap(), (2, 0.4));
        assert_eq!(granularize(20.0, 5).unwrap().0, 2);
        assert_eq!(granularize(19.999, 5).unwrap().0, 1);
        assert!(matches!(granularize(50.0, 1), Err(FeedbackError::BadBins(1))));
    }

    #[test]
    fn skew_compresses_by_factor() {
        assert_eq!(skew(100.0, 0.25).unwrap(), 0.25);
        assert_eq!(skew(0.0, 0.25).unwrap(), 0.0);
        assert!((skew(40.0, 0.25).unwrap() - 0.10).abs() < 1e-15);
        assert!(matches!(skew(10.0, 0.0), Err(FeedbackError::BadSkewFactor(_))));
        assert!(matches!(skew(10.0, 1.5), Err(FeedbackError::BadSkewFactor(_))));
    }

    #[test]
    fn zero_sigma_variance_equals_scale_pointwise() {
        let mut state = variance_state(0.0, 1.0, 42);
        for bleu in [0.0, 12.5, 29.4, 50.0, 99.9, 100.0] {
            let reward = perturb_variance(bleu, &mut state).unwrap();
            assert_eq!(reward.to_bits(), scale(bleu).unwrap().to_bits());
        }
        assert_eq!(state.events(), 6);
    }

    #[test]
    fn variance_empirical_mean_is_centered() {
        let mut state = variance_state(0.1, 1.0, 7);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += perturb_variance(50.0, &mut state).unwrap();
        }
        let mean = sum / f64::from(n);
        // 5 sigma from both bounds, so clipping bias is negligible.
        assert!((mean - 0.5).abs() < 0.002, "mean = {mean}");
    }

    #[test]
    fn variance_sequences_are_seed_deterministic() {
        let mut a = variance_state(0.1, 1.0, 99);
        let mut b = variance_state(0.1, 1.0, 99);
        for _ in 0..200 {
            let x = a.apply(42.0).unwrap();
            let y = b.apply(42.0).unwrap();
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let mut c = variance_state(0.1, 1.0, 100);
        let differs = (0..200).any(|_| {
            a.apply(42.0).unwrap().to_bits() != c.apply(42.0).unwrap().to_bits()
        });
        assert!(differs);
    }

    #[test]
    fn shrink_zero_silences_noise_after_first_event() {
        let mut state = variance_state(0.1, 0.0, 3);
        // First event: sigma = 0.1 * 0^0 = 0.1, almost surely perturbed.
        let first = state.apply(50.0).unwrap();
        assert_ne!(first.to_bits(), 0.5f64.to_bits());
        // From the second event on: sigma = 0.1 * 0^n = 0.
        for _ in 0..10 {
            assert_eq!(state.apply(50.0).unwrap().to_bits(), 0.5f64.to_bits());
        }
    }

    #[test]
    fn config_validation_rejects_bad_knobs() {
        for config in [
            FeedbackConfig { bins: 1, ..FeedbackConfig::default() },
            FeedbackConfig { sigma0: -0.1, ..FeedbackConfig::default() },
            FeedbackConfig { shrink: -1.0, ..FeedbackConfig::default() },
            FeedbackConfig { skew_factor: 0.0, ..FeedbackConfig::default() },
        ] {
            assert!(FeedbackState::new(config, 0).is_err());
        }
    }

    proptest! {
        #[test]
        fn transforms_land_in_unit_interval(bleu in 0.0f64..=100.0, seed in any::<u64>()) {
            prop_assert!((0.0..=1.0).contains(&scale(bleu).unwrap()));
            let (rating, reward) = granularize(bleu, 5).unwrap();
            prop_assert!((1..=5).contains(&rating));
            prop_assert!((0.0..=1.0).contains(&reward));
            prop_assert!((0.0..=1.0).contains(&skew(bleu, 0.25).unwrap()));
            let mut state = variance_state(0.3, 1.0, seed);
            prop_assert!((0.0..=1.0).contains(&perturb_variance(bleu, &mut state).unwrap()));
        }

        #[test]
        fn deterministic_transforms_are_monotone(a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(scale(lo).unwrap() <= scale(hi).unwrap());
            prop_assert!(granularize(lo, 5).unwrap().1 <= granularize(hi, 5).unwrap().1);
            prop_assert!(skew(lo, 0.25).unwrap() <= skew(hi, 0.25).unwrap());
        }

        #[test]
        fn scale_and_skew_preserve_argmax(scores in proptest::collection::vec(0.0f64..=100.0, 2..8)) {
            let argmax = |xs: &[f64]| {
                let mut best = 0;
                for (i, &x) in xs.iter().enumerate() {
                    if x > xs[best] { best = i; }
                }
                best
            };
            let raw = argmax(&scores);
            let scaled: Vec<f64> = scores.iter().map(|&s| scale(s).unwrap()).collect();
            let skewed: Vec<f64> = scores.iter().map(|&s| skew(s, 0.25).unwrap()).collect();
            prop_assert_eq!(argmax(&scaled), raw);
            prop_assert_eq!(argmax(&skewed), raw);
            // Granular: the raw argmax reaches the top transformed reward.
            let grains: Vec<f64> = scores.iter().map(|&s| granularize(s, 5).unwrap().1).collect();
            let top = grains.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert_eq!(grains[raw], top);
        }
    }
}
