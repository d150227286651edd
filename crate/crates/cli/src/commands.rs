//! Implementations behind the five subcommands.

use std::collections::HashSet;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use mtselect_core::{
    aggregate_sweep, build_reward_matrix, decision_heatmap, heatmap_from_steps, run_simulation,
    summarize, write_records, ArmCatalog, Dataset, FeedbackConfig, FeedbackStyle, Heatmap,
    PolicyConfig, PolicyKind, RewardMatrixOptions, RunLog, RunSummary, SimulationSpec, StepTrace,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::{ReportArgs, RunArgs, ScoreArgs, SweepArgs, SynthArgs};

// ── Shared output plumbing ──────────────────────────────────────────────

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// `summary.json` body: run metadata plus the headline numbers.
#[derive(Serialize)]
struct RunReport<'a> {
    meta: &'a mtselect_core::RunMeta,
    summary: &'a RunSummary,
}

fn heatmap_csv(arm_names: &[String], map: &Heatmap) -> String {
    debug_assert_eq!(arm_names.len(), map.arms);
    let mut out = String::from("arm");
    for c in 0..map.columns {
        out.push_str(&format!(",t{}", c as u64 * map.interval + 1));
    }
    out.push('\n');
    for (name, row) in arm_names.iter().zip(&map.cells) {
        out.push_str(name);
        for cell in row {
            out.push_str(&format!(",{cell:.6}"));
        }
        out.push('\n');
    }
    out
}

fn curve_csv(steps: &[StepTrace]) -> String {
    let mut out = String::from("t,regret_cum\n");
    for step in steps {
        out.push_str(&format!("{},{:.6}\n", step.t, step.regret_cum));
    }
    out
}

fn write_run_outputs(
    dir: &Path,
    log: &RunLog,
    summary: &RunSummary,
    heatmap: &Heatmap,
) -> Result<(), CliError> {
    create_dir(dir)?;
    write_file(&dir.join("runlog.jsonl"), &log.steps_to_jsonl())?;
    let report = RunReport {
        meta: &log.meta,
        summary,
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write_file(&dir.join("summary.json"), &json)?;
    write_file(&dir.join("heatmap.csv"), &heatmap_csv(&log.meta.arms, heatmap))?;
    Ok(())
}

// ── Policy/feedback selection ───────────────────────────────────────────

fn parse_kind(name: &str) -> Option<PolicyKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
}

fn parse_style(name: &str) -> Option<FeedbackStyle> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).ok()
}

/// Resolves the policy a `run` should use: the `--policy` flag (matched
/// against `[[policies]]` labels, then read as a kind), else `[policy]`,
/// else a sole `[[policies]]` entry.
fn select_policy(config: &ExperimentConfig, flag: Option<&str>) -> Result<PolicyConfig, CliError> {
    if let Some(name) = flag {
        if let Some(section) = config.policies.iter().find(|s| s.label() == name) {
            return Ok(section.config.clone());
        }
        if let Some(kind) = parse_kind(name) {
            if let Some(policy) = &config.policy {
                if policy.kind == kind {
                    return Ok(policy.clone());
                }
            }
            return Ok(PolicyConfig::new(kind));
        }
        return Err(CliError::Invalid(format!(
            "--policy `{name}` is neither a configured policy nor a policy kind"
        )));
    }
    if let Some(policy) = &config.policy {
        return Ok(policy.clone());
    }
    match config.policies.as_slice() {
        [only] => Ok(only.config.clone()),
        [] => Err(CliError::Invalid(
            "no policy configured: add [policy] to the config or pass --policy".into(),
        )),
        _ => Err(CliError::Invalid(
            "several policies configured: pick one with --policy".into(),
        )),
    }
}

fn override_style(
    mut feedback: FeedbackConfig,
    flag: Option<&str>,
) -> Result<FeedbackConfig, CliError> {
    if let Some(name) = flag {
        feedback.style = parse_style(name).ok_or_else(|| {
            CliError::Invalid(format!(
                "--feedback `{name}` is not a feedback style (scale, granular, variance, skew)"
            ))
        })?;
    }
    Ok(feedback)
}

fn output_dir(flag: &Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| {
            CliError::Invalid(
                "no output directory: set `output_dir` in the config or pass --out-dir".into(),
            )
        })
}

// ── score ───────────────────────────────────────────────────────────────

pub fn cmd_score(args: &ScoreArgs) -> Result<(), CliError> {
    let opts = RewardMatrixOptions {
        domain: args.domain.clone(),
        id_prefix: args.id_prefix.clone(),
        source_path: args.source.clone(),
        keep_hypotheses: !args.no_hyps,
    };
    let records = build_reward_matrix(&args.refs, &args.hyps, &opts)?;
    let count = records.len();

    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    if args.hyps.len() >= 2 {
        // A full catalog validates name uniqueness and record shape.
        let catalog = ArmCatalog::new(args.hyps.iter().map(|(name, _)| name.clone()))?;
        let dataset = Dataset::new(catalog, records)?;
        dataset.save(&args.out)?;
    } else {
        // One system is not yet a bandit problem, but its score column is
        // still a useful artifact; write the records without a catalog.
        let file = fs::File::create(&args.out).map_err(|source| CliError::Write {
            path: args.out.clone(),
            source,
        })?;
        write_records(&records, BufWriter::new(file)).map_err(|source| CliError::Write {
            path: args.out.clone(),
            source,
        })?;
    }
    println!(
        "scored {count} sentences across {} system(s) into {}",
        args.hyps.len(),
        args.out.display()
    );
    Ok(())
}

// ── synth ───────────────────────────────────────────────────────────────

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&args.config)?;
    let spec = config.synth.as_ref().ok_or_else(|| {
        CliError::Invalid(format!(
            "`{}` has no [synth] section",
            args.config.display()
        ))
    })?;
    let dataset = mtselect_core::generate(spec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    dataset.save(&args.out)?;
    println!(
        "generated {} records ({} arms, {} domains) into {}",
        dataset.len(),
        dataset.arm_count(),
        dataset.domains().len(),
        args.out.display()
    );
    Ok(())
}

// ── run ─────────────────────────────────────────────────────────────────

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&args.config)?;
    let dataset = config.dataset()?;
    let features = config.features()?;
    let policy = select_policy(&config, args.policy.as_deref())?;
    let feedback = override_style(config.feedback.clone(), args.feedback.as_deref())?;
    let master_seed = args.seed.unwrap_or(config.seeds[0]);
    let t_cap = args.t_cap.or(config.t_cap);
    let dir = output_dir(&args.out_dir, &config)?;

    let spec = SimulationSpec {
        plan: &config.schedule,
        policy: &policy,
        feedback: &feedback,
        features: features.as_ref(),
        master_seed,
        t_cap,
    };
    let log = run_simulation(&dataset, &spec)?;
    let summary = summarize(&log, &dataset)?;
    let heatmap = decision_heatmap(&log, args.interval)?;
    write_run_outputs(&dir, &log, &summary, &heatmap)?;
    println!(
        "{} on {} steps: cumulative regret {:.3}, avg {:.4}; outputs in {}",
        policy.kind.name(),
        summary.steps,
        summary.cumulative_regret,
        summary.average_regret,
        dir.display()
    );
    Ok(())
}

// ── sweep ───────────────────────────────────────────────────────────────

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let config = ExperimentConfig::load(&args.config)?;
    let dataset = config.dataset()?;
    let features = config.features()?;
    let dir = output_dir(&args.out_dir, &config)?;

    let sections: Vec<(String, PolicyConfig)> = if config.policies.is_empty() {
        let policy = config.policy.clone().ok_or_else(|| {
            CliError::Invalid("no policies configured: add [policy] or [[policies]]".into())
        })?;
        vec![(policy.kind.name().to_string(), policy)]
    } else {
        config
            .policies
            .iter()
            .map(|s| (s.label(), s.config.clone()))
            .collect()
    };

    // A repeated seed reruns identically for the aggregate's statistics but
    // must not have two threads writing the same directory.
    let mut seen = HashSet::new();
    let jobs: Vec<(&String, &PolicyConfig, u64, bool)> = sections
        .iter()
        .flat_map(|(label, policy)| config.seeds.iter().map(move |&s| (label, policy, s)))
        .map(|(label, policy, seed)| {
            let first = seen.insert((label.clone(), seed));
            (label, policy, seed, first)
        })
        .collect();

    let logs: Vec<RunLog> = jobs
        .par_iter()
        .map(|&(label, policy, seed, write)| -> Result<RunLog, CliError> {
            let spec = SimulationSpec {
                plan: &config.schedule,
                policy,
                feedback: &config.feedback,
                features: features.as_ref(),
                master_seed: seed,
                t_cap: config.t_cap,
            };
            let log = run_simulation(&dataset, &spec)?;
            if write {
                let summary = summarize(&log, &dataset)?;
                let heatmap = decision_heatmap(&log, args.interval)?;
                let run_dir = dir.join(label).join(format!("seed-{seed}"));
                write_run_outputs(&run_dir, &log, &summary, &heatmap)?;
            }
            Ok(log)
        })
        .collect::<Result<_, _>>()?;

    let aggregates = aggregate_sweep(&logs, &dataset)?;
    let mut table = String::from(
        "policy,kind,runs,avg_regret_mean,avg_regret_std,avg_feedback_mean,avg_feedback_std,\
         chosen_raw_mean,chosen_raw_std,corpus_bleu_mean,corpus_bleu_std\n",
    );
    for agg in &aggregates {
        let label = sections
            .iter()
            .find(|(_, policy)| *policy == agg.policy)
            .map(|(label, _)| label.as_str())
            .expect("every aggregate comes from a configured policy");
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
        table.push_str(&format!(
            "{label},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            agg.policy.kind.name(),
            agg.runs,
            agg.avg_regret_mean,
            agg.avg_regret_std,
            agg.avg_feedback_mean,
            agg.avg_feedback_std,
            agg.chosen_raw_mean,
            agg.chosen_raw_std,
            opt(agg.corpus_bleu_mean),
            opt(agg.corpus_bleu_std),
        ));
    }
    write_file(&dir.join("aggregate.csv"), &table)?;
    println!(
        "swept {} policies x {} seeds into {}",
        sections.len(),
        config.seeds.len(),
        dir.display()
    );
    Ok(())
}

// ── report ──────────────────────────────────────────────────────────────

fn unique_stem(path: &Path, used: &mut HashSet<String>) -> String {
    let base = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "log".into());
    if used.insert(base.clone()) {
        return base;
    }
    for i in 2.. {
        let candidate = format!("{base}-{i}");
        if used.insert(candidate.clone()) {
            return candidate;
        }
    }
    unreachable!()
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    create_dir(&args.out_dir)?;
    let mut used = HashSet::new();

    for path in &args.logs {
        let file = fs::File::open(path).map_err(|source| CliError::Read {
            path: path.clone(),
            source,
        })?;
        let steps = RunLog::read_steps(file)?;
        if steps.is_empty() {
            return Err(CliError::Invalid(format!(
                "`{}` contains no steps",
                path.display()
            )));
        }

        let arm_names: Vec<String> = match &args.arms {
            Some(names) => names.clone(),
            None => {
                let k = steps
                    .iter()
                    .map(|s| s.arm.max(s.oracle_arm) + 1)
                    .max()
                    .unwrap_or(1);
                (0..k).map(|i| format!("arm-{i}")).collect()
            }
        };
        let heatmap = heatmap_from_steps(&steps, arm_names.len(), args.interval)?;

        let stem = unique_stem(path, &mut used);
        write_file(&args.out_dir.join(format!("curve-{stem}.csv")), &curve_csv(&steps))?;
        write_file(
            &args.out_dir.join(format!("heatmap-{stem}.csv")),
            &heatmap_csv(&arm_names, &heatmap),
        )?;
    }
    println!(
        "reported {} log(s) into {}",
        args.logs.len(),
        args.out_dir.display()
    );
    Ok(())
}
