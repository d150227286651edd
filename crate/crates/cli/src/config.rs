//! The TOML experiment file shared by `synth`, `run`, and `sweep`.
//!
//! A config names the data (a dataset file plus its arm list, or a [synth]
//! block), a schedule, one or more policies, the feedback model, optional
//! features, the master seeds, and where outputs go. Section keys match the
//! field names of the underlying library types one for one.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mtselect_core::{
    generate, load_vocab, ArmCatalog, Dataset, FeatureBlock, FeatureConfig, FeedbackConfig,
    PolicyConfig, SchedulePlan, SynthSpec,
};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset to load (JSON lines). Mutually exclusive with `[synth]`.
    pub dataset: Option<PathBuf>,
    /// Arm names in score order; required with `dataset`.
    pub arms: Option<Vec<String>>,
    /// Master seeds. `run` uses the first, `sweep` runs all of them.
    pub seeds: Vec<u64>,
    pub output_dir: Option<PathBuf>,
    /// Stop each run after this many steps.
    pub t_cap: Option<u64>,
    #[serde(default = "default_plan")]
    pub schedule: SchedulePlan,
    /// Single policy, used by `run`.
    pub policy: Option<PolicyConfig>,
    /// Policy grid, used by `sweep` (and by `run --policy <name>`).
    #[serde(default)]
    pub policies: Vec<PolicySection>,
    #[serde(default)]
    pub feedback: FeedbackConfig,
    pub features: Option<FeaturesSection>,
    pub synth: Option<SynthSpec>,
}

fn default_plan() -> SchedulePlan {
    SchedulePlan::Sequential
}

#[derive(Debug, Deserialize)]
pub struct PolicySection {
    /// Directory and table label; defaults to the policy kind.
    pub name: Option<String>,
    #[serde(flatten)]
    pub config: PolicyConfig,
}

impl PolicySection {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.config.kind.name().to_string())
    }
}

/// `[features]` with the vocabulary given as a file path.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeaturesSection {
    pub blocks: Vec<FeatureBlock>,
    pub vocab: Option<PathBuf>,
    pub oov_threshold: Option<f64>,
    pub len_bin_edges: Option<Vec<usize>>,
    pub emb_prefix_len: Option<usize>,
}

impl FeaturesSection {
    pub fn build(&self) -> Result<FeatureConfig, CliError> {
        let mut config = FeatureConfig {
            blocks: self.blocks.clone(),
            ..FeatureConfig::default()
        };
        if let Some(path) = &self.vocab {
            config.vocab = Some(load_vocab(path)?);
        }
        if let Some(v) = self.oov_threshold {
            config.oov_threshold = v;
        }
        if let Some(v) = &self.len_bin_edges {
            config.len_bin_edges = v.clone();
        }
        if let Some(v) = self.emb_prefix_len {
            config.emb_prefix_len = v;
        }
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        config.validate(path)?;
        Ok(config)
    }

    fn validate(&self, path: &Path) -> Result<(), CliError> {
        let fail = |message: String| {
            Err(CliError::Config {
                path: path.to_path_buf(),
                message,
            })
        };
        match (&self.dataset, &self.synth) {
            (Some(_), Some(_)) => return fail("set either `dataset` or [synth], not both".into()),
            (None, None) => return fail("one of `dataset` or [synth] is required".into()),
            (Some(_), None) if self.arms.is_none() => {
                return fail("`arms` is required alongside `dataset`".into())
            }
            _ => {}
        }
        if self.seeds.is_empty() {
            return fail("`seeds` must not be empty".into());
        }
        if let (Some(arms), Some(synth)) = (&self.arms, &self.synth) {
            if *arms != synth.arms {
                return fail("`arms` disagrees with the [synth] arm list".into());
            }
        }
        let mut labels: Vec<String> = Vec::new();
        for section in &self.policies {
            let label = section.label();
            if labels.contains(&label) {
                return fail(format!(
                    "duplicate policy label `{label}`; give each [[policies]] entry a unique name"
                ));
            }
            labels.push(label);
        }
        for (i, section) in self.policies.iter().enumerate() {
            if self.policies[..i].iter().any(|s| s.config == section.config) {
                return fail(format!(
                    "[[policies]] entry {} repeats an earlier configuration",
                    i + 1
                ));
            }
        }
        Ok(())
    }

    /// Loads the dataset file or generates the synthetic one.
    pub fn dataset(&self) -> Result<Dataset, CliError> {
        match (&self.dataset, &self.synth) {
            (Some(path), None) => {
                let arms = self.arms.as_ref().expect("checked by validate");
                let catalog = ArmCatalog::new(arms.iter().cloned())?;
                Ok(Dataset::load(path, catalog)?)
            }
            (None, Some(spec)) => Ok(generate(spec)?),
            _ => unreachable!("checked by validate"),
        }
    }

    pub fn features(&self) -> Result<Option<FeatureConfig>, CliError> {
        self.features.as_ref().map(FeaturesSection::build).transpose()
    }
}
