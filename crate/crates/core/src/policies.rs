//! Arm-selection policies behind one choose/update contract.
//!
//! Random, epsilon-greedy, and UCB1 ignore context; LinUCB keeps a per-arm
//! ridge model over the context vector. Oracle picks the per-record best
//! arm from raw scores and BestArmOracle always plays one precomputed arm;
//! both are baselines and never learn.
//!
//! Tie handling: uniform-random from the policy RNG for epsilon-greedy,
//! LinUCB, and Oracle; lowest index for UCB1, BestArmOracle, and
//! [`precompute_best_arm`], which stay RNG-free.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Dataset;
use crate::features::FeatureVector;
use crate::linalg;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("epsilon {0} outside [0,1]")]
    BadEpsilon(f64),

    #[error("alpha {0} must be finite and nonnegative")]
    BadAlpha(f64),

    #[error("lambda {0} must be finite and positive")]
    BadLambda(f64),

    #[error("policies need at least 2 arms, got {0}")]
    TooFewArms(usize),

    #[error("contextual policy requires a context dimension")]
    NeedsContextDim,

    #[error("best-arm baseline requires a precomputed arm")]
    NeedsBestArm,

    #[error("contextual policy called without a context vector")]
    MissingContext,

    #[error("context has {got} dims, policy expects {expected}")]
    ContextDimMismatch { expected: usize, got: usize },

    #[error("oracle policy called without record scores")]
    MissingScores,

    #[error("got {got} scores for {expected} arms")]
    ScoresLenMismatch { expected: usize, got: usize },

    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("reward {0} outside [0,1]")]
    RewardOutOfRange(f64),

    #[error("cannot pick a best arm from an empty dataset")]
    EmptyDataset,

    #[error("ridge matrix lost positive definiteness")]
    Numerical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    EpsilonGreedy,
    Ucb1,
    #[serde(rename = "linucb")]
    LinUcb,
    Oracle,
    BestArmOracle,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::EpsilonGreedy => "epsilon_greedy",
            PolicyKind::Ucb1 => "ucb1",
            PolicyKind::LinUcb => "linucb",
            PolicyKind::Oracle => "oracle",
            PolicyKind::BestArmOracle => "best_arm_oracle",
        }
    }

    /// Whether choose/update require a context vector.
    pub fn is_contextual(self) -> bool {
        matches!(self, PolicyKind::LinUcb)
    }

    /// Whether choose reads the record's raw scores.
    pub fn needs_scores(self) -> bool {
        matches!(self, PolicyKind::Oracle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Added to the derived policy-stream seed.
    #[serde(default)]
    pub seed: u64,
}

fn default_epsilon() -> f64 {
    0.3
}
fn default_alpha() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1.0
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            epsilon: default_epsilon(),
            alpha: default_alpha(),
            lambda: default_lambda(),
            seed: 0,
        }
    }
}

/// Per-arm pull counts and running mean rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTracker {
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl MeanTracker {
    pub fn new(arms: usize) -> Self {
        Self {
            counts: vec![0; arms],
            means: vec![0.0; arms],
        }
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        let n = self.counts[arm] as f64;
        self.means[arm] += (reward - self.means[arm]) / n;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn first_unpulled(&self) -> Option<usize> {
        self.counts.iter().position(|&n| n == 0)
    }

    fn unpulled(&self) -> Vec<usize> {
        (0..self.counts.len()).filter(|&k| self.counts[k] == 0).collect()
    }
}

const RESOLVE_INTERVAL: u64 = 1000;

/// Ridge state of one LinUCB arm: A = lambda*I + sum(x x^T), b = sum(r x).
///
/// The inverse is maintained by rank-one updates and re-solved from A every
/// [`RESOLVE_INTERVAL`] updates to bound drift.
#[derive(Debug, Clone, PartialEq)]
pub struct LinUcbArmState {
    dim: usize,
    a: Vec<f64>,
    a_inv: Vec<f64>,
    b: Vec<f64>,
    since_resolve: u64,
}

impl LinUcbArmState {
    fn new(dim: usize, lambda: f64) -> Self {
        Self {
            dim,
            a: linalg::scaled_identity(dim, lambda),
            a_inv: linalg::scaled_identity(dim, 1.0 / lambda),
            b: vec![0.0; dim],
            since_resolve: 0,
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        linalg::mat_vec(&self.a_inv, self.dim, &self.b)
    }

    /// Decision value for context x: theta.x + alpha*sqrt(x^T A^-1 x).
    fn ucb(&self, x: &[f64], alpha: f64) -> f64 {
        let theta = self.theta();
        let a_inv_x = linalg::mat_vec(&self.a_inv, self.dim, x);
        let width = linalg::dot(x, &a_inv_x).max(0.0).sqrt();
        linalg::dot(&theta, x) + alpha * width
    }

    fn update(&mut self, x: &[f64], reward: f64) -> Result<(), PolicyError> {
        linalg::add_outer(&mut self.a, self.dim, x);
        for (bi, xi) in self.b.iter_mut().zip(x) {
            *bi += reward * xi;
        }
        self.since_resolve += 1;
        if self.since_resolve >= RESOLVE_INTERVAL
            || !linalg::sherman_morrison_update(&mut self.a_inv, self.dim, x)
        {
            self.a_inv = linalg::spd_invert(&self.a, self.dim).ok_or(PolicyError::Numerical)?;
            self.since_resolve = 0;
        }
        Ok(())
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn inverse(&self) -> &[f64] {
        &self.a_inv
    }
}

#[derive(Debug, Clone)]
enum State {
    Random,
    EpsilonGreedy {
        epsilon: f64,
        tracker: MeanTracker,
    },
    Ucb1 {
        tracker: MeanTracker,
        /// Choose calls answered so far.
        t: u64,
    },
    LinUcb {
        alpha: f64,
        dim: usize,
        arms: Vec<LinUcbArmState>,
    },
    Oracle,
    BestArmOracle {
        arm: usize,
    },
}

/// One policy instance: selection state plus its private RNG stream.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    k: usize,
    state: State,
    rng: ChaCha12Rng,
}

impl Policy {
    /// Builds a policy from config.
    ///
    /// `context_dim` is required for contextual kinds, `best_arm` for
    /// BestArmOracle. `seed` is the final policy-stream seed; callers
    /// combine the master seed and `config.seed` before this point.
    pub fn from_config(
        config: &PolicyConfig,
        arms: usize,
        context_dim: Option<usize>,
        best_arm: Option<usize>,
        seed: u64,
    ) -> Result<Self, PolicyError> {
        if arms < 2 {
            return Err(PolicyError::TooFewArms(arms));
        }
        if !(0.0..=1.0).contains(&config.epsilon) || config.epsilon.is_nan() {
            return Err(PolicyError::BadEpsilon(config.epsilon));
        }
        if !config.alpha.is_finite() || config.alpha < 0.0 {
            return Err(PolicyError::BadAlpha(config.alpha));
        }
        if !config.lambda.is_finite() || config.lambda <= 0.0 {
            return Err(PolicyError::BadLambda(config.lambda));
        }
        let state = match config.kind {
            PolicyKind::Random => State::Random,
            PolicyKind::EpsilonGreedy => State::EpsilonGreedy {
                epsilon: config.epsilon,
                tracker: MeanTracker::new(arms),
            },
            PolicyKind::Ucb1 => State::Ucb1 {
                tracker: MeanTracker::new(arms),
                t: 0,
            },
            PolicyKind::LinUcb => {
                let dim = context_dim.ok_or(PolicyError::NeedsContextDim)?;
                State::LinUcb {
                    alpha: config.alpha,
                    dim,
                    arms: (0..arms)
                        .map(|_| LinUcbArmState::new(dim, config.lambda))
                        .collect(),
                }
            }
            PolicyKind::Oracle => State::Oracle,
            PolicyKind::BestArmOracle => {
                let arm = best_arm.ok_or(PolicyError::NeedsBestArm)?;
                if arm >= arms {
                    return Err(PolicyError::ArmOutOfRange { arm, arms });
                }
                State::BestArmOracle { arm }
            }
        };
        Ok(Self {
            kind: config.kind,
            k: arms,
            state,
            rng: ChaCha12Rng::seed_from_u64(seed),
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn arms(&self) -> usize {
        self.k
    }

    fn check_context<'a>(
        &self,
        dim: usize,
        context: Option<&'a FeatureVector>,
    ) -> Result<&'a [f64], PolicyError> {
        let x = context.ok_or(PolicyError::MissingContext)?;
        if x.len() != dim {
            return Err(PolicyError::ContextDimMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        Ok(x.values())
    }

    fn argmax_uniform(&mut self, values: &[f64]) -> usize {
        let mut best = f64::NEG_INFINITY;
        for &v in values {
            if v > best {
                best = v;
            }
        }
        let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] == best).collect();
        if ties.len() == 1 {
            ties[0]
        } else {
            ties[self.rng.random_range(0..ties.len())]
        }
    }

    /// Picks an arm for the current step.
    ///
    /// `raw_scores` is read only by the Oracle kind; other kinds ignore it.
    pub fn choose(
        &mut self,
        context: Option<&FeatureVector>,
        raw_scores: Option<&[f64]>,
    ) -> Result<usize, PolicyError> {
        match self.kind {
            PolicyKind::Random => {
                let k = self.k;
                Ok(self.rng.random_range(0..k))
            }
            PolicyKind::EpsilonGreedy => {
                let State::EpsilonGreedy { epsilon, tracker } = &self.state else {
                    unreachable!()
                };
                let epsilon = *epsilon;
                let unpulled = tracker.unpulled();
                let means = tracker.means().to_vec();
                if !unpulled.is_empty() {
                    let i = self.rng.random_range(0..unpulled.len());
                    return Ok(unpulled[i]);
                }
                if self.rng.random::<f64>() < epsilon {
                    let k = self.k;
                    return Ok(self.rng.random_range(0..k));
                }
                Ok(self.argmax_uniform(&means))
            }
            PolicyKind::Ucb1 => {
                let State::Ucb1 { tracker, t } = &mut self.state else {
                    unreachable!()
                };
                *t += 1;
                if let Some(arm) = tracker.first_unpulled() {
                    return Ok(arm);
                }
                let log_t = (*t as f64).ln();
                let mut best = 0;
                let mut best_index = f64::NEG_INFINITY;
                for (k, (&mean, &n)) in tracker.means().iter().zip(tracker.counts()).enumerate()
                {
                    let index = mean + (2.0 * log_t / n as f64).sqrt();
                    // Strict comparison keeps ties on the lowest index.
                    if index > best_index {
                        best = k;
                        best_index = index;
                    }
                }
                Ok(best)
            }
            PolicyKind::LinUcb => {
                let State::LinUcb { alpha, dim, arms } = &self.state else {
                    unreachable!()
                };
                let x = self.check_context(*dim, context)?;
                let scores: Vec<f64> = arms.iter().map(|arm| arm.ucb(x, *alpha)).collect();
                Ok(self.argmax_uniform(&scores))
            }
            PolicyKind::Oracle => {
                let scores = raw_scores.ok_or(PolicyError::MissingScores)?;
                if scores.len() != self.k {
                    return Err(PolicyError::ScoresLenMismatch {
                        expected: self.k,
                        got: scores.len(),
                    });
                }
                let scores = scores.to_vec();
                Ok(self.argmax_uniform(&scores))
            }
            PolicyKind::BestArmOracle => {
                let State::BestArmOracle { arm } = &self.state else {
                    unreachable!()
                };
                Ok(*arm)
            }
        }
    }

    /// Feeds back the observed reward for an arm. Random and the oracle
    /// baselines are no-ops and leave the policy bit-identical.
    pub fn update(
        &mut self,
        arm: usize,
        reward: f64,
        context: Option<&FeatureVector>,
    ) -> Result<(), PolicyError> {
        if arm >= self.k {
            return Err(PolicyError::ArmOutOfRange { arm, arms: self.k });
        }
        if !(0.0..=1.0).contains(&reward) || reward.is_nan() {
            return Err(PolicyError::RewardOutOfRange(reward));
        }
        match &mut self.state {
            State::EpsilonGreedy { tracker, .. } | State::Ucb1 { tracker, .. } => {
                tracker.update(arm, reward);
                Ok(())
            }
            State::LinUcb { dim, arms, .. } => {
                let dim = *dim;
                let x = {
                    let v = context.ok_or(PolicyError::MissingContext)?;
                    if v.len() != dim {
                        return Err(PolicyError::ContextDimMismatch {
                            expected: dim,
                            got: v.len(),
                        });
                    }
                    v.values().to_vec()
                };
                arms[arm].update(&x, reward)
            }
            State::Random | State::Oracle | State::BestArmOracle { .. } => Ok(()),
        }
    }

    /// The values the next choose call will rank, for policies that rank:
    /// means for epsilon-greedy (greedy mode), UCB1 indices at the next
    /// step (infinite for unpulled arms), LinUCB scores for the given
    /// context. None for Random and the oracle baselines.
    pub fn decision_scores(
        &self,
        context: Option<&FeatureVector>,
    ) -> Result<Option<Vec<f64>>, PolicyError> {
        match &self.state {
            State::EpsilonGreedy { tracker, .. } => Ok(Some(tracker.means().to_vec())),
            State::Ucb1 { tracker, t } => {
                let log_t = ((*t + 1) as f64).ln();
                let scores = (0..self.k)
                    .map(|k| {
                        if tracker.counts()[k] == 0 {
                            f64::INFINITY
                        } else {
                            tracker.means()[k]
                                + (2.0 * log_t / tracker.counts()[k] as f64).sqrt()
                        }
                    })
                    .collect();
                Ok(Some(scores))
            }
            State::LinUcb { alpha, dim, arms } => {
                let x = self.check_context(*dim, context)?;
                Ok(Some(arms.iter().map(|arm| arm.ucb(x, *alpha)).collect()))
            }
            State::Random | State::Oracle | State::BestArmOracle { .. } => Ok(None),
        }
    }

    /// Per-arm pull counts, for policies that track them.
    pub fn pull_counts(&self) -> Option<&[u64]> {
        match &self.state {
            State::EpsilonGreedy { tracker, .. } | State::Ucb1 { tracker, .. } => {
                Some(tracker.counts())
            }
            _ => None,
        }
    }

    /// Per-arm mean rewards, for policies that track them.
    pub fn mean_rewards(&self) -> Option<&[f64]> {
        match &self.state {
            State::EpsilonGreedy { tracker, .. } | State::Ucb1 { tracker, .. } => {
                Some(tracker.means())
            }
            _ => None,
        }
    }

    /// LinUCB's ridge solution for one arm.
    pub fn linucb_theta(&self, arm: usize) -> Option<Vec<f64>> {
        match &self.state {
            State::LinUcb { arms, .. } => arms.get(arm).map(LinUcbArmState::theta),
            _ => None,
        }
    }

    /// LinUCB's raw per-arm state.
    pub fn linucb_arm(&self, arm: usize) -> Option<&LinUcbArmState> {
        match &self.state {
            State::LinUcb { arms, .. } => arms.get(arm),
            _ => None,
        }
    }
}

/// The single fixed arm with the highest mean score over the dataset;
/// ties go to the lowest index.
pub fn precompute_best_arm(dataset: &Dataset) -> Result<usize, PolicyError> {
    if dataset.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let k = dataset.arm_count();
    let mut sums = vec![0.0f64; k];
    for record in dataset.records() {
        for (s, &v) in sums.iter_mut().zip(&record.arm_scores) {
            *s += v;
        }
    }
    let mut best = 0;
    for (arm, &s) in sums.iter().enumerate() {
        if s > sums[best] {
            best = arm;
        }
    }
    Ok(best)
}
