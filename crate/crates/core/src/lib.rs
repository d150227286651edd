//! Online machine-translation system selection as a bandit problem.
//!
//! A fixed set of pre-built translation systems forms the arms of a bandit.
//! Each incoming source sentence carries a precomputed quality score per arm;
//! a policy picks one arm per step, observes simulated (noisy, coarse) user
//! feedback for that arm only, and is judged by the cumulative regret against
//! the per-step best arm.
//!
//! The crate is organized around that loop:
//!
//! - [`environment`]: dataset model, line-delimited ingestion, and
//!   domain-mixture stream scheduling (sequential, cyclic blocks, shuffled).
//! - [`scoring`]: sentence- and corpus-level BLEU for building per-arm score
//!   matrices from real translation output.
//! - [`features`]: per-sentence context vectors (bias / OOV / length bins /
//!   embedding prefix) for contextual policies.
//! - [`feedback`]: transforms a raw score into simulated user feedback
//!   (scaling, 1–5 binning, Gaussian noise, pessimistic skew).
//! - [`policies`]: Random, epsilon-greedy, UCB1, LinUCB and two oracle
//!   baselines behind one choose/update contract.
//! - [`evaluation`]: the simulation driver, step traces, regret accounting,
//!   decision heatmaps, and multi-seed aggregation.
//! - [`synth`]: synthetic multi-domain dataset generation so experiments run
//!   without real MT systems.
//!
//! Everything stochastic is seeded explicitly and uses a fixed-algorithm RNG,
//! so identical inputs produce byte-identical outputs across runs and
//! platforms.

pub mod environment;
pub mod evaluation;
pub mod features;
pub mod feedback;
pub mod linalg;
pub mod policies;
pub mod scoring;
pub mod seeding;
pub mod synth;

pub use environment::{
    build_schedule, write_records, ArmCatalog, DataError, Dataset, EvalRecord, ScheduleError,
    SchedulePlan, ScheduledStream,
};
pub use evaluation::{
    aggregate_sweep, decision_heatmap, heatmap_from_steps, run_simulation, summarize, EvalError,
    Heatmap, PolicyAggregate, RunLog, RunMeta, RunSummary, SimError, SimulationSpec, StepTrace,
};
pub use features::{
    featurize, load_vocab, oov_rate, FeatureBlock, FeatureConfig, FeatureError, FeatureVector,
};
pub use feedback::{
    granularize, perturb_variance, scale, skew, FeedbackConfig, FeedbackError, FeedbackState,
    FeedbackStyle,
};
pub use policies::{precompute_best_arm, Policy, PolicyConfig, PolicyError, PolicyKind};
pub use scoring::{
    build_reward_matrix, corpus_bleu, sentence_bleu, BleuBreakdown, BleuError, NGramCounts,
    RewardMatrixOptions,
};
pub use synth::{generate, SynthError, SynthSpec};
