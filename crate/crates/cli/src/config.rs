//! Run-configuration file: one TOML document driving every subcommand.
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use yieldbench_core::data::SplitSpec;
use yieldbench_core::knowledge::KnowledgeConfig;
use yieldbench_core::logit::StepwiseConfig;

use crate::CliError;

#[derive(Debug, Deserialize)]
struct RawConfig {
    paths: RawPaths,
    split: RawSplit,
    #[serde(default)]
    stepwise: RawStepwise,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    knowledge: RawKnowledge,
    #[serde(default)]
    scoring: RawScoring,
}

#[derive(Debug, Deserialize)]
struct RawPaths {
    events: PathBuf,
    sites: PathBuf,
    /// Omit to use the built-in 19-variable schema.
    schema: Option<PathBuf>,
    images_dir: Option<PathBuf>,
    cache: Option<PathBuf>,
    output_dir: PathBuf,
    /// Provider config (also the pricing source).
    providers: PathBuf,
}

#[derive(Debug, Deserialize)]
struct RawSplit {
    train_sites: Vec<u32>,
    test_sites: Vec<u32>,
}

#[derive(Debug, Default, Deserialize)]
struct RawStepwise {
    alpha_enter: Option<f64>,
    alpha_remove: Option<f64>,
    max_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct RawRun {
    provider: Option<String>,
    mode: Option<String>,
    parallelism: Option<usize>,
    template_version: Option<String>,
    mock_response: Option<String>,
    classification_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawKnowledge {
    descriptive_gap_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct RawScoring {
    /// "exclude" (default) or "as-nonyield".
    failed_parses: Option<String>,
}

/// How failed predictions enter the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedParsePolicy {
    Exclude,
    AsNonYield,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub events: PathBuf,
    pub sites: PathBuf,
    pub schema: Option<PathBuf>,
    pub images_dir: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub providers: PathBuf,
    pub split: SplitSpec,
    pub stepwise: StepwiseConfig,
    pub knowledge: KnowledgeConfig,
    pub provider: String,
    pub mode: String,
    pub parallelism: usize,
    pub template_version: String,
    pub mock_response: String,
    pub classification_threshold: f64,
    pub failed_parses: FailedParsePolicy,
}

fn resolve(base: &Path, path: PathBuf) -> PathBuf {
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

impl RunConfig {
    pub fn load(config_path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(config_path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", config_path.display()))
        })?;
        let raw: RawConfig = toml::from_str(&text).map_err(|e| {
            CliError::Usage(format!("cannot parse config {}: {e}", config_path.display()))
        })?;
        let base = config_path.parent().unwrap_or(Path::new(".")).to_path_buf();

        let split = SplitSpec::new(raw.split.train_sites, raw.split.test_sites)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let defaults = StepwiseConfig::default();
        let stepwise = StepwiseConfig {
            alpha_enter: raw.stepwise.alpha_enter.unwrap_or(defaults.alpha_enter),
            alpha_remove: raw.stepwise.alpha_remove.unwrap_or(defaults.alpha_remove),
            max_steps: raw.stepwise.max_steps.unwrap_or(defaults.max_steps),
        };
        let knowledge = KnowledgeConfig {
            descriptive_gap_threshold: raw
                .knowledge
                .descriptive_gap_threshold
                .unwrap_or(KnowledgeConfig::default().descriptive_gap_threshold),
        };
        let failed_parses = match raw.scoring.failed_parses.as_deref() {
            None | Some("exclude") => FailedParsePolicy::Exclude,
            Some("as-nonyield") => FailedParsePolicy::AsNonYield,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "scoring.failed_parses must be `exclude` or `as-nonyield`, got `{other}`"
                )))
            }
        };

        Ok(RunConfig {
            events: resolve(&base, raw.paths.events),
            sites: resolve(&base, raw.paths.sites),
            schema: raw.paths.schema.map(|p| resolve(&base, p)),
            images_dir: raw.paths.images_dir.map(|p| resolve(&base, p)),
            cache: raw.paths.cache.map(|p| resolve(&base, p)),
            output_dir: resolve(&base, raw.paths.output_dir),
            providers: resolve(&base, raw.paths.providers),
            split,
            stepwise,
            knowledge,
            provider: raw.run.provider.unwrap_or_else(|| "mock".to_string()),
            mode: raw.run.mode.unwrap_or_else(|| "replay".to_string()),
            parallelism: raw.run.parallelism.unwrap_or(4),
            template_version: raw
                .run
                .template_version
                .unwrap_or_else(|| yieldbench_core::prompt::TEMPLATE_VERSION.to_string()),
            mock_response: raw
                .run
                .mock_response
                .unwrap_or_else(|| "DECISION: YIELD".to_string()),
            classification_threshold: raw.run.classification_threshold.unwrap_or(0.5),
            failed_parses,
        })
    }
}
