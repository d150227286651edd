//! The simulation driver and everything downstream of it: step logs,
//! decision heatmaps, per-run summaries, and sweep aggregation.
//!
//! A run walks a scheduled stream once. At each step the policy picks an
//! arm, the simulated user turns that arm's raw score into bounded feedback,
//! and the policy updates from that feedback alone. Regret is bookkept
//! against the per-record best arm on the raw 0-100 scale, which the policy
//! never observes (the oracle kinds excepted, by design).
//!
//! One master seed drives a run. Policy, feedback, and schedule randomness
//! are split into separate sub-streams so that changing, say, the feedback
//! noise offset leaves the schedule untouched.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{build_schedule, Dataset, SchedulePlan, ScheduleError};
use crate::features::{featurize, FeatureConfig, FeatureError};
use crate::feedback::{FeedbackConfig, FeedbackError, FeedbackState};
use crate::policies::{precompute_best_arm, Policy, PolicyConfig, PolicyError, PolicyKind};
use crate::scoring::{corpus_bleu, BleuError};
use crate::seeding::{sub_seed, STREAM_FEEDBACK, STREAM_POLICY, STREAM_SCHEDULE};

// ── Errors ──────────────────────────────────────────────────────────────

/// A step-level failure inside a running simulation.
#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Feature(#[from] FeatureError),

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Feedback(#[from] FeedbackError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Feedback(#[from] FeedbackError),

    #[error("policy `{0}` needs a feature configuration")]
    ContextRequired(&'static str),

    #[error("step {t} failed: {source}")]
    Step {
        t: u64,
        #[source]
        source: StepError,
    },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("run log has no steps")]
    EmptyLog,

    #[error("heatmap interval must be at least 1")]
    BadInterval,

    #[error("cannot aggregate zero runs")]
    EmptyAggregate,

    #[error("aggregated runs must share one schedule plan")]
    MixedPlans,

    #[error("step {t} references record `{id}` which is not in the dataset")]
    LogDatasetMismatch { t: u64, id: String },

    #[error("step {t} chose arm {arm}, outside the {arms}-arm catalog")]
    ArmOutOfRange { t: u64, arm: usize, arms: usize },

    #[error(transparent)]
    Policy(#[from] PolicyError),

    #[error(transparent)]
    Bleu(#[from] BleuError),

    #[error("log line {line}: {message}")]
    ParseStep { line: usize, message: String },

    #[error("log i/o failed")]
    Io(#[from] std::io::Error),
}

// ── Run logs ────────────────────────────────────────────────────────────

/// One simulation step. Serialized as one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    /// 1-based step index.
    pub t: u64,
    pub record_id: String,
    pub domain: String,
    /// Arm the policy chose.
    pub arm: usize,
    /// Transformed feedback the policy saw, in [0,1].
    pub feedback: f64,
    /// Raw score of the chosen arm.
    pub raw: f64,
    /// Best arm for this record.
    pub oracle_arm: usize,
    /// Raw score of the best arm.
    pub oracle_raw: f64,
    /// Cumulative regret through this step, in raw score units.
    pub regret_cum: f64,
}

impl StepTrace {
    /// Regret incurred at this step alone.
    pub fn instant_regret(&self) -> f64 {
        self.oracle_raw - self.raw
    }
}

/// Everything needed to reproduce a run.
///
/// `plan` is the plan as configured; shuffle seeds are derived from
/// `seed` at run time without modifying the stored plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// Master seed the run was driven by.
    pub seed: u64,
    pub policy: PolicyConfig,
    pub feedback: FeedbackConfig,
    pub plan: SchedulePlan,
    /// Arm names, in catalog order.
    pub arms: Vec<String>,
}

/// A completed run: its configuration and the full step trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub steps: Vec<StepTrace>,
}

impl RunLog {
    /// Writes the steps as JSON lines. Metadata is not included; it travels
    /// in the run summary instead.
    pub fn write_steps<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for step in &self.steps {
            let line = serde_json::to_string(step).expect("step serialization cannot fail");
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    pub fn steps_to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_steps(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Reads step lines back from a log file.
    pub fn read_steps<R: Read>(reader: R) -> Result<Vec<StepTrace>, EvalError> {
        let mut steps = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step: StepTrace =
                serde_json::from_str(&line).map_err(|e| EvalError::ParseStep {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            steps.push(step);
        }
        Ok(steps)
    }
}

// ── Simulation ──────────────────────────────────────────────────────────

/// Configuration for one run over a dataset.
#[derive(Debug, Clone)]
pub struct SimulationSpec<'a> {
    pub plan: &'a SchedulePlan,
    pub policy: &'a PolicyConfig,
    pub feedback: &'a FeedbackConfig,
    /// Required for contextual policies, ignored otherwise.
    pub features: Option<&'a FeatureConfig>,
    pub master_seed: u64,
    /// Stop after this many steps; `None` walks the whole stream.
    pub t_cap: Option<u64>,
}

/// Runs one policy once over the scheduled dataset.
pub fn run_simulation(dataset: &Dataset, spec: &SimulationSpec) -> Result<RunLog, SimError> {
    let kind = spec.policy.kind;
    let master = spec.master_seed;

    // Each random component reads its own derived stream.
    let policy_seed = sub_seed(master, STREAM_POLICY).wrapping_add(spec.policy.seed);
    let feedback_seed = sub_seed(master, STREAM_FEEDBACK).wrapping_add(spec.feedback.seed_offset);
    let mut effective_plan = spec.plan.clone();
    if let SchedulePlan::ShuffledMixture { seed, .. } = &mut effective_plan {
        *seed = sub_seed(master, STREAM_SCHEDULE).wrapping_add(*seed);
    }

    let features = if kind.is_contextual() {
        let config = spec
            .features
            .ok_or(SimError::ContextRequired(kind.name()))?;
        config.validate().map_err(|e| SimError::Step {
            t: 0,
            source: e.into(),
        })?;
        Some(config)
    } else {
        None
    };
    let context_dim = features.map(FeatureConfig::width);

    let best_arm = if kind == PolicyKind::BestArmOracle {
        Some(precompute_best_arm(dataset)?)
    } else {
        None
    };

    let mut policy = Policy::from_config(
        spec.policy,
        dataset.arm_count(),
        context_dim,
        best_arm,
        policy_seed,
    )?;
    let mut feedback = FeedbackState::new(spec.feedback.clone(), feedback_seed)?;
    let stream = build_schedule(dataset, &effective_plan)?;

    let cap = spec.t_cap.unwrap_or(u64::MAX);
    let mut steps = Vec::new();
    let mut regret_cum = 0.0;

    for (_, record) in stream {
        let t = steps.len() as u64 + 1;
        if t > cap {
            break;
        }
        let step_err = |source: StepError| SimError::Step { t, source };

        let context = match features {
            Some(config) => {
                let x = featurize(record, config).map_err(|e| step_err(e.into()))?;
                // The feature layout is fixed by the config; a width change
                // mid-stream would corrupt the ridge state.
                assert_eq!(
                    x.len(),
                    context_dim.unwrap(),
                    "feature width changed mid-run"
                );
                Some(x)
            }
            None => None,
        };

        let oracle_arm = record.best_arm();
        let oracle_raw = record.arm_scores[oracle_arm];
        let raw_scores = kind.needs_scores().then_some(record.arm_scores.as_slice());

        let arm = policy
            .choose(context.as_ref(), raw_scores)
            .map_err(|e| step_err(e.into()))?;
        let raw = record.arm_scores[arm];
        let reward = feedback.apply(raw).map_err(|e| step_err(e.into()))?;
        policy
            .update(arm, reward, context.as_ref())
            .map_err(|e| step_err(e.into()))?;

        regret_cum += oracle_raw - raw;
        steps.push(StepTrace {
            t,
            record_id: record.id.clone(),
            domain: record.domain.clone(),
            arm,
            feedback: reward,
            raw,
            oracle_arm,
            oracle_raw,
            regret_cum,
        });
    }

    Ok(RunLog {
        meta: RunMeta {
            seed: master,
            policy: spec.policy.clone(),
            feedback: spec.feedback.clone(),
            plan: spec.plan.clone(),
            arms: dataset.catalog().names().to_vec(),
        },
        steps,
    })
}

// ── Heatmaps ────────────────────────────────────────────────────────────

/// Share of choices per arm within consecutive step windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub interval: u64,
    /// Row count; one row per arm.
    pub arms: usize,
    /// Column count; `ceil(steps / interval)`.
    pub columns: usize,
    /// `cells[arm][column]`, each column summing to 1.
    pub cells: Vec<Vec<f64>>,
}

/// Bins a run's decisions into windows of `interval` steps.
pub fn decision_heatmap(log: &RunLog, interval: u64) -> Result<Heatmap, EvalError> {
    heatmap_from_steps(&log.steps, log.meta.arms.len(), interval)
}

/// Heatmap over bare steps, for logs read back without metadata.
pub fn heatmap_from_steps(
    steps: &[StepTrace],
    arms: usize,
    interval: u64,
) -> Result<Heatmap, EvalError> {
    if steps.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    if interval == 0 {
        return Err(EvalError::BadInterval);
    }
    let columns = steps.len().div_ceil(interval as usize);
    let mut cells = vec![vec![0.0; columns]; arms];
    let mut column_totals = vec![0u64; columns];

    for (i, step) in steps.iter().enumerate() {
        if step.arm >= arms {
            return Err(EvalError::ArmOutOfRange {
                t: step.t,
                arm: step.arm,
                arms,
            });
        }
        let col = i / interval as usize;
        cells[step.arm][col] += 1.0;
        column_totals[col] += 1;
    }
    for row in &mut cells {
        for (cell, &total) in row.iter_mut().zip(&column_totals) {
            *cell /= total as f64;
        }
    }
    Ok(Heatmap {
        interval,
        arms,
        columns,
        cells,
    })
}

// ── Summaries ───────────────────────────────────────────────────────────

/// Headline numbers for one completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub cumulative_regret: f64,
    /// Cumulative regret divided by steps, in raw score points.
    pub average_regret: f64,
    pub average_feedback: f64,
    pub pull_counts: Vec<u64>,
    /// Corpus BLEU of the chosen translations, when the dataset carries
    /// references and per-arm hypotheses.
    pub chosen_corpus_bleu: Option<f64>,
    pub mean_chosen_raw: f64,
    pub mean_oracle_raw: f64,
    /// Arm with the highest mean raw score over the whole dataset.
    pub best_fixed_arm: usize,
    /// That arm's mean raw score over the steps of this run.
    pub best_fixed_arm_mean_raw: f64,
}

/// Summarizes a run against the dataset it was produced from.
pub fn summarize(log: &RunLog, dataset: &Dataset) -> Result<RunSummary, EvalError> {
    if log.steps.is_empty() {
        return Err(EvalError::EmptyLog);
    }
    let arms = dataset.arm_count();
    let by_id: HashMap<&str, usize> = dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let best_fixed_arm = precompute_best_arm(dataset)?;

    let t = log.steps.len() as f64;
    let mut feedback_sum = 0.0;
    let mut raw_sum = 0.0;
    let mut oracle_sum = 0.0;
    let mut fixed_sum = 0.0;
    let mut pull_counts = vec![0u64; arms];
    let mut bleu_pairs: Option<Vec<(&[String], &[String])>> = Some(Vec::new());

    for step in &log.steps {
        let record = by_id
            .get(step.record_id.as_str())
            .map(|&i| &dataset.records()[i])
            .ok_or_else(|| EvalError::LogDatasetMismatch {
                t: step.t,
                id: step.record_id.clone(),
            })?;
        if step.arm >= arms {
            return Err(EvalError::ArmOutOfRange {
                t: step.t,
                arm: step.arm,
                arms,
            });
        }
        feedback_sum += step.feedback;
        raw_sum += step.raw;
        oracle_sum += step.oracle_raw;
        fixed_sum += record.arm_scores[best_fixed_arm];
        pull_counts[step.arm] += 1;

        if let Some(pairs) = &mut bleu_pairs {
            match (&record.reference_tokens, &record.arm_hypotheses) {
                (Some(reference), Some(hyps)) => {
                    pairs.push((hyps[step.arm].as_slice(), reference.as_slice()));
                }
                _ => bleu_pairs = None,
            }
        }
    }

    let chosen_corpus_bleu = match bleu_pairs {
        Some(pairs) => Some(corpus_bleu(pairs)?.score),
        None => None,
    };
    let last = log.steps.last().expect("steps checked nonempty");

    Ok(RunSummary {
        steps: log.steps.len() as u64,
        cumulative_regret: last.regret_cum,
        average_regret: last.regret_cum / t,
        average_feedback: feedback_sum / t,
        pull_counts,
        chosen_corpus_bleu,
        mean_chosen_raw: raw_sum / t,
        mean_oracle_raw: oracle_sum / t,
        best_fixed_arm,
        best_fixed_arm_mean_raw: fixed_sum / t,
    })
}

// ── Sweep aggregation ───────────────────────────────────────────────────

/// Mean and spread of run summaries sharing one policy configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyAggregate {
    pub policy: PolicyConfig,
    pub runs: usize,
    pub avg_regret_mean: f64,
    pub avg_regret_std: f64,
    pub avg_feedback_mean: f64,
    pub avg_feedback_std: f64,
    pub chosen_raw_mean: f64,
    pub chosen_raw_std: f64,
    /// Present only when every grouped run produced a corpus BLEU.
    pub corpus_bleu_mean: Option<f64>,
    pub corpus_bleu_std: Option<f64>,
}

/// Sample mean and standard deviation (n-1); std is 0 for a single value.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups runs by policy configuration and reports mean/std per group.
///
/// Groups appear in first-appearance order. All runs must share one
/// schedule plan; mixing plans would average incomparable regrets.
pub fn aggregate_sweep(logs: &[RunLog], dataset: &Dataset) -> Result<Vec<PolicyAggregate>, EvalError> {
    let first = logs.first().ok_or(EvalError::EmptyAggregate)?;
    if logs.iter().any(|log| log.meta.plan != first.meta.plan) {
        return Err(EvalError::MixedPlans);
    }

    let mut groups: Vec<(PolicyConfig, Vec<RunSummary>)> = Vec::new();
    for log in logs {
        let summary = summarize(log, dataset)?;
        match groups.iter_mut().find(|(c, _)| *c == log.meta.policy) {
            Some((_, summaries)) => summaries.push(summary),
            None => groups.push((log.meta.policy.clone(), vec![summary])),
        }
    }

    Ok(groups
        .into_iter()
        .map(|(policy, summaries)| {
            let collect = |f: fn(&RunSummary) -> f64| -> Vec<f64> {
                summaries.iter().map(f).collect()
            };
            let (avg_regret_mean, avg_regret_std) = mean_std(&collect(|s| s.average_regret));
            let (avg_feedback_mean, avg_feedback_std) =
                mean_std(&collect(|s| s.average_feedback));
            let (chosen_raw_mean, chosen_raw_std) = mean_std(&collect(|s| s.mean_chosen_raw));
            let bleus: Option<Vec<f64>> =
                summaries.iter().map(|s| s.chosen_corpus_bleu).collect();
            let (corpus_bleu_mean, corpus_bleu_std) = match bleus {
                Some(values) => {
                    let (m, s) = mean_std(&values);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            PolicyAggregate {
                runs: summaries.len(),
                policy,
                avg_regret_mean,
                avg_regret_std,
                avg_feedback_mean,
                avg_feedback_std,
                chosen_raw_mean,
                chosen_raw_std,
                corpus_bleu_mean,
                corpus_bleu_std,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{ArmCatalog, EvalRecord};
    use crate::feedback::FeedbackStyle;
    use crate::scoring::{build_reward_matrix, RewardMatrixOptions};
    use crate::synth::{generate, SynthSpec};
    use std::collections::BTreeMap;
    use std::io::Write as IoWrite;

    /// Dataset of constant-score records: one entry per domain with its
    /// per-arm scores and record count.
    fn const_dataset(arms: &[&str], domains: &[(&str, &[f64], usize)]) -> Dataset {
        let catalog = ArmCatalog::new(arms.iter().map(|s| s.to_string())).unwrap();
        let mut records = Vec::new();
        for (domain, scores, count) in domains {
            for i in 0..*count {
                records.push(EvalRecord {
                    id: format!("{domain}-{i}"),
                    domain: domain.to_string(),
                    source_tokens: vec!["a".into(), "b".into(), "c".into()],
                    reference_tokens: None,
                    arm_scores: scores.to_vec(),
                    arm_hypotheses: None,
                    embedding: None,
                });
            }
        }
        Dataset::new(catalog, records).unwrap()
    }

    fn spec_of<'a>(
        plan: &'a SchedulePlan,
        policy: &'a PolicyConfig,
        feedback: &'a FeedbackConfig,
        master_seed: u64,
    ) -> SimulationSpec<'a> {
        SimulationSpec {
            plan,
            policy,
            feedback,
            features: None,
            master_seed,
            t_cap: None,
        }
    }

    #[test]
    fn oracle_has_zero_regret() {
        let ds = const_dataset(
            &["a", "b", "c"],
            &[("x", &[10.0, 70.0, 30.0], 60), ("y", &[55.0, 20.0, 25.0], 60)],
        );
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Oracle);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 3)).unwrap();

        assert_eq!(log.steps.len(), 120);
        for step in &log.steps {
            assert_eq!(step.arm, step.oracle_arm);
            assert_eq!(step.regret_cum, 0.0);
            assert_eq!(step.raw, step.oracle_raw);
        }
        let summary = summarize(&log, &ds).unwrap();
        assert_eq!(summary.cumulative_regret, 0.0);
        assert_eq!(summary.average_regret, 0.0);
    }

    #[test]
    fn random_policy_regret_matches_closed_form() {
        // Two arms at constant 20 and 60: picking uniformly at random incurs
        // regret 40 half the time, so average regret converges to 20.
        let ds = const_dataset(&["low", "high"], &[("d", &[20.0, 60.0], 10_000)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Random);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 9)).unwrap();
        let summary = summarize(&log, &ds).unwrap();

        assert!(
            (summary.average_regret - 20.0).abs() < 1.0,
            "avg regret {}",
            summary.average_regret
        );
        assert_eq!(summary.mean_oracle_raw, 60.0);
        assert_eq!(summary.best_fixed_arm, 1);
        assert_eq!(summary.best_fixed_arm_mean_raw, 60.0);
    }

    #[test]
    fn regret_bookkeeping_is_consistent() {
        let ds = const_dataset(
            &["a", "b"],
            &[("x", &[35.0, 65.0], 300), ("y", &[80.0, 40.0], 300)],
        );
        let plan = SchedulePlan::ShuffledMixture {
            mixture_ratios: [("x".to_string(), 1.0), ("y".to_string(), 2.0)]
                .into_iter()
                .collect(),
            seed: 0,
        };
        let policy = PolicyConfig::new(PolicyKind::EpsilonGreedy);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 1)).unwrap();

        let mut cum = 0.0;
        let mut prev = 0.0;
        for (i, step) in log.steps.iter().enumerate() {
            assert_eq!(step.t, i as u64 + 1);
            cum += step.instant_regret();
            assert!((step.regret_cum - cum).abs() < 1e-9);
            assert!(step.regret_cum >= prev);
            prev = step.regret_cum;
        }
        let summary = summarize(&log, &ds).unwrap();
        assert!((summary.cumulative_regret - cum).abs() < 1e-9);
        assert!(
            (summary.average_regret - cum / log.steps.len() as f64).abs() < 1e-12
        );
        assert_eq!(summary.pull_counts.iter().sum::<u64>(), 600);

        // No policy can do worse than always taking the per-record minimum.
        let worst: f64 = log
            .steps
            .iter()
            .map(|s| s.oracle_raw - 35.0_f64.min(40.0))
            .sum();
        assert!(summary.cumulative_regret <= worst);
    }

    #[test]
    fn runs_are_reproducible_and_seeds_matter() {
        let ds = const_dataset(
            &["a", "b"],
            &[("x", &[30.0, 50.0], 150), ("y", &[70.0, 20.0], 150)],
        );
        let plan = SchedulePlan::ShuffledMixture {
            mixture_ratios: [("x".to_string(), 1.0), ("y".to_string(), 1.0)]
                .into_iter()
                .collect(),
            seed: 5,
        };
        let mut policy = PolicyConfig::new(PolicyKind::EpsilonGreedy);
        policy.epsilon = 0.5;
        let feedback = FeedbackConfig {
            style: FeedbackStyle::Variance,
            ..FeedbackConfig::default()
        };

        let a = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 7)).unwrap();
        let b = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 7)).unwrap();
        assert_eq!(a.steps_to_jsonl(), b.steps_to_jsonl());

        let c = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 8)).unwrap();
        assert_ne!(a.steps_to_jsonl(), c.steps_to_jsonl());
        // A different master seed reshuffles the stream too.
        let ids_a: Vec<&str> = a.steps.iter().map(|s| s.record_id.as_str()).collect();
        let ids_c: Vec<&str> = c.steps.iter().map(|s| s.record_id.as_str()).collect();
        assert_ne!(ids_a, ids_c);
    }

    #[test]
    fn step_lines_round_trip() {
        let ds = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 25)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Ucb1);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 2)).unwrap();

        let mut buf = Vec::new();
        log.write_steps(&mut buf).unwrap();
        let back = RunLog::read_steps(buf.as_slice()).unwrap();
        assert_eq!(back, log.steps);

        // Field order in the emitted lines is part of the format.
        let line = log.steps_to_jsonl();
        let first = line.lines().next().unwrap();
        let mut last_pos = 0;
        for key in [
            "t",
            "record_id",
            "domain",
            "arm",
            "feedback",
            "raw",
            "oracle_arm",
            "oracle_raw",
            "regret_cum",
        ] {
            let needle = format!("\"{key}\":");
            let pos = first.find(&needle).unwrap_or_else(|| {
                panic!("field `{key}` missing from step line {first}")
            });
            assert!(pos >= last_pos, "field `{key}` out of order in {first}");
            last_pos = pos;
        }
    }

    #[test]
    fn t_cap_truncates_the_stream() {
        let ds = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 500)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::LinUcb);
        let feedback = FeedbackConfig::default();
        let features = FeatureConfig::default();
        let spec = SimulationSpec {
            plan: &plan,
            policy: &policy,
            feedback: &feedback,
            features: Some(&features),
            master_seed: 4,
            t_cap: Some(10),
        };
        let log = run_simulation(&ds, &spec).unwrap();
        assert_eq!(log.steps.len(), 10);
        assert_eq!(log.steps.last().unwrap().t, 10);
        assert_eq!(log.steps[0].record_id, "x-0");
    }

    #[test]
    fn contextual_policy_requires_features() {
        let ds = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 5)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::LinUcb);
        let feedback = FeedbackConfig::default();
        let err = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 0)).unwrap_err();
        assert!(matches!(err, SimError::ContextRequired("linucb")));
    }

    #[test]
    fn best_arm_oracle_regret_is_the_fixed_arm_gap() {
        let spec = SynthSpec {
            arms: vec!["s1".into(), "s2".into(), "s3".into()],
            domains: vec!["p".into(), "q".into()],
            means: [
                ("p".to_string(), vec![40.0, 60.0, 20.0]),
                ("q".to_string(), vec![70.0, 30.0, 20.0]),
            ]
            .into_iter()
            .collect(),
            noise_sigma: 5.0,
            records_per_domain: 400,
            seed: 13,
            len_range: (4, 24),
            domain_one_hot_emb: false,
        };
        let ds = generate(&spec).unwrap();
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::BestArmOracle);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 21)).unwrap();
        let summary = summarize(&log, &ds).unwrap();

        let expected = precompute_best_arm(&ds).unwrap();
        assert_eq!(summary.best_fixed_arm, expected);
        assert_eq!(summary.pull_counts[expected], 800);
        assert_eq!(summary.mean_chosen_raw, summary.best_fixed_arm_mean_raw);
        assert!(
            (summary.average_regret
                - (summary.mean_oracle_raw - summary.best_fixed_arm_mean_raw))
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn heatmap_columns_are_distributions() {
        let ds = const_dataset(&["a", "b", "c"], &[("x", &[10.0, 20.0, 90.0], 137)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Random);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 6)).unwrap();

        let map = decision_heatmap(&log, 25).unwrap();
        assert_eq!(map.arms, 3);
        assert_eq!(map.columns, 6); // 137 steps in windows of 25
        for col in 0..map.columns {
            let sum: f64 = (0..map.arms).map(|a| map.cells[a][col]).sum();
            assert!((sum - 1.0).abs() < 1e-12, "column {col} sums to {sum}");
        }
    }

    #[test]
    fn heatmap_tracks_single_arm_and_domain_blocks() {
        // Fixed-arm run: all mass on that arm's row.
        let ds = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 50)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::BestArmOracle);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 0)).unwrap();
        let map = decision_heatmap(&log, 10).unwrap();
        for col in 0..map.columns {
            assert_eq!(map.cells[0][col], 0.0);
            assert_eq!(map.cells[1][col], 1.0);
        }

        // Oracle over alternating domain blocks: columns flip arm by arm.
        let ds = const_dataset(
            &["a", "b"],
            &[("x", &[50.0, 10.0], 40), ("y", &[10.0, 50.0], 40)],
        );
        let plan = SchedulePlan::CyclicBlocks {
            block_size: 10,
            domain_order: vec!["x".into(), "y".into()],
        };
        let policy = PolicyConfig::new(PolicyKind::Oracle);
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 0)).unwrap();
        let map = decision_heatmap(&log, 10).unwrap();
        assert_eq!(map.columns, 8);
        for col in 0..8 {
            let hot = col % 2;
            assert_eq!(map.cells[hot][col], 1.0);
            assert_eq!(map.cells[1 - hot][col], 0.0);
        }
    }

    #[test]
    fn heatmap_rejects_bad_inputs() {
        let ds = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 5)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Random);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 0)).unwrap();
        assert!(matches!(
            decision_heatmap(&log, 0),
            Err(EvalError::BadInterval)
        ));

        let empty = RunLog {
            meta: log.meta.clone(),
            steps: Vec::new(),
        };
        assert!(matches!(
            decision_heatmap(&empty, 10),
            Err(EvalError::EmptyLog)
        ));
        assert!(matches!(summarize(&empty, &ds), Err(EvalError::EmptyLog)));
    }

    #[test]
    fn summary_corpus_bleu_matches_direct_corpus_scoring() {
        let dir = tempfile::tempdir().unwrap();
        let write =
            |name: &str, lines: &[&str]| -> std::path::PathBuf {
                let path = dir.path().join(name);
                let mut f = std::fs::File::create(&path).unwrap();
                for line in lines {
                    writeln!(f, "{line}").unwrap();
                }
                path
            };
        let refs = write(
            "refs.txt",
            &[
                "the cat sat on the mat",
                "he reads a long book today",
                "rain falls over the green hills",
                "she walks to the old market",
            ],
        );
        let good = write(
            "good.txt",
            &[
                "the cat sat on the mat",
                "he reads a long book now",
                "rain falls over green hills",
                "she walks to the market",
            ],
        );
        let weak = write(
            "weak.txt",
            &[
                "a dog stood near a door",
                "he holds one short letter",
                "snow covers all distant roads",
                "they ride past the new square",
            ],
        );

        let opts = RewardMatrixOptions::default();
        let records = build_reward_matrix(
            &refs,
            &[
                ("good".to_string(), good.clone()),
                ("weak".to_string(), weak.clone()),
            ],
            &opts,
        )
        .unwrap();
        let catalog = ArmCatalog::new(["good".to_string(), "weak".to_string()]).unwrap();
        let ds = Dataset::new(catalog, records).unwrap();

        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Oracle);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 0)).unwrap();
        let summary = summarize(&log, &ds).unwrap();

        let pairs: Vec<(&[String], &[String])> = ds
            .records()
            .iter()
            .map(|r| {
                let best = r.best_arm();
                (
                    r.arm_hypotheses.as_ref().unwrap()[best].as_slice(),
                    r.reference_tokens.as_ref().unwrap().as_slice(),
                )
            })
            .collect();
        let direct = corpus_bleu(pairs).unwrap().score;
        assert_eq!(summary.chosen_corpus_bleu, Some(direct));
        assert!(direct > 0.0);

        // Without hypotheses there is nothing to score.
        let bare = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 5)]);
        let log = run_simulation(&bare, &spec_of(&plan, &policy, &feedback, 0)).unwrap();
        assert_eq!(summarize(&log, &bare).unwrap().chosen_corpus_bleu, None);
    }

    #[test]
    fn summarize_rejects_foreign_logs() {
        let ds = const_dataset(&["a", "b"], &[("x", &[10.0, 90.0], 5)]);
        let other = const_dataset(&["a", "b"], &[("z", &[10.0, 90.0], 5)]);
        let plan = SchedulePlan::Sequential;
        let policy = PolicyConfig::new(PolicyKind::Random);
        let feedback = FeedbackConfig::default();
        let log = run_simulation(&ds, &spec_of(&plan, &policy, &feedback, 0)).unwrap();
        assert!(matches!(
            summarize(&log, &other),
            Err(EvalError::LogDatasetMismatch { t: 1, .. })
        ));
    }

    #[test]
    fn aggregation_groups_by_policy_in_first_appearance_order() {
        let ds = const_dataset(&["a", "b"], &[("x", &[20.0, 60.0], 1000)]);
        let plan = SchedulePlan::Sequential;
        let feedback = FeedbackConfig::default();
        let random = PolicyConfig::new(PolicyKind::Random);
        let fixed = PolicyConfig::new(PolicyKind::BestArmOracle);

        let mut logs = Vec::new();
        for seed in [1, 2] {
            logs.push(run_simulation(&ds, &spec_of(&plan, &random, &feedback, seed)).unwrap());
            logs.push(run_simulation(&ds, &spec_of(&plan, &fixed, &feedback, seed)).unwrap());
        }
        let aggregates = aggregate_sweep(&logs, &ds).unwrap();
        assert_eq!(aggregates.len(), 2);
        assert_eq!(aggregates[0].policy, random);
        assert_eq!(aggregates[1].policy, fixed);
        assert_eq!(aggregates[0].runs, 2);
        assert_eq!(aggregates[1].runs, 2);

        // The fixed arm ignores its seed, so its spread is exactly zero.
        assert_eq!(aggregates[1].avg_regret_mean, 0.0);
        assert_eq!(aggregates[1].avg_regret_std, 0.0);
        assert_eq!(aggregates[1].chosen_raw_std, 0.0);
        // Constant scores carry no hypotheses, so no corpus BLEU.
        assert_eq!(aggregates[1].corpus_bleu_mean, None);
    }

    #[test]
    fn aggregated_random_regret_concentrates_on_twenty() {
        let ds = const_dataset(&["a", "b"], &[("x", &[20.0, 60.0], 1000)]);
        let plan = SchedulePlan::Sequential;
        let feedback = FeedbackConfig::default();
        let random = PolicyConfig::new(PolicyKind::Random);

        let logs: Vec<RunLog> = (0..20)
            .map(|seed| run_simulation(&ds, &spec_of(&plan, &random, &feedback, seed)).unwrap())
            .collect();
        let aggregates = aggregate_sweep(&logs, &ds).unwrap();
        assert_eq!(aggregates.len(), 1);
        let agg = &aggregates[0];
        assert_eq!(agg.runs, 20);
        assert!(
            (agg.avg_regret_mean - 20.0).abs() < 1.0,
            "mean {}",
            agg.avg_regret_mean
        );
        assert!(agg.avg_regret_std > 0.0 && agg.avg_regret_std < 3.0);
        assert!((agg.avg_feedback_mean - 0.4).abs() < 0.01);
    }

    #[test]
    fn aggregation_rejects_empty_and_mixed_inputs() {
        let ds = const_dataset(&["a", "b"], &[("x", &[20.0, 60.0], 10)]);
        assert!(matches!(
            aggregate_sweep(&[], &ds),
            Err(EvalError::EmptyAggregate)
        ));

        let policy = PolicyConfig::new(PolicyKind::Random);
        let feedback = FeedbackConfig::default();
        let seq = run_simulation(
            &ds,
            &spec_of(&SchedulePlan::Sequential, &policy, &feedback, 0),
        )
        .unwrap();
        let mix_plan = SchedulePlan::ShuffledMixture {
            mixture_ratios: BTreeMap::from([("x".to_string(), 1.0)]),
            seed: 0,
        };
        let mixed = run_simulation(&ds, &spec_of(&mix_plan, &policy, &feedback, 0)).unwrap();
        assert!(matches!(
            aggregate_sweep(&[seq, mixed], &ds),
            Err(EvalError::MixedPlans)
        ));
    }

    #[test]
    fn bad_step_lines_report_their_line_number() {
        let text = "{\"t\":1,\"record_id\":\"a\",\"domain\":\"x\",\"arm\":0,\"feedback\":0.5,\"raw\":50.0,\"oracle_arm\":0,\"oracle_raw\":50.0,\"regret_cum\":0.0}\nnot json\n";
        let err = RunLog::read_steps(text.as_bytes()).unwrap_err();
        assert!(matches!(err, EvalError::ParseStep { line: 2, .. }));
    }
}
