//! Run settings: command-line flags (or their `TDF_*` environment variables)
//! override a flat TOML file, which overrides built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde::Deserialize;
use tdf_core::pipeline::{DEFAULT_MAX_ITERATIONS, DEFAULT_PARALLELISM};
use tdf_core::seed::derive_seed;
use tdf_core::vector::{DEFAULT_NPROBE, DEFAULT_THRESHOLD};
use tdf_core::{FilterConfig, FilterMode, IndexMode, IndexParams, TreeParams};

pub const DEFAULT_CONF_ACCURACY: f64 = 0.85;
pub const DEFAULT_NLI_ACCURACY: f64 = 0.95;
pub const DEFAULT_RETRIES: usize = 2;
pub const DEFAULT_TIMEOUT_SECS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    /// Local feature-hashing embedder.
    Hash,
    /// The embedding route of `--endpoint`.
    Remote,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub mode: Option<FilterMode>,
    pub threshold: Option<f64>,
    pub max_iterations: Option<usize>,
    pub parallelism: Option<usize>,
    pub index: Option<IndexMode>,
    pub nlist: Option<usize>,
    pub nprobe: Option<usize>,
    pub distractors: Option<PathBuf>,
    pub retries: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub endpoint: Option<String>,
    pub embedder: Option<EmbedderKind>,
    pub conf_accuracy: Option<f64>,
    pub nli_accuracy: Option<f64>,
    pub timeout_secs: Option<u64>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat TOML file of settings; flags take precedence.
    #[arg(long, env = "TDF_CONFIG")]
    pub config: Option<PathBuf>,
    /// Top-level seed from which every random stream is derived.
    #[arg(long, env = "TDF_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluatorArgs {
    /// Base URL of a service speaking the evaluator contracts. Without it the
    /// seeded mock oracles run in-process.
    #[arg(long, env = "TDF_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, value_enum, env = "TDF_EMBEDDER")]
    pub embedder: Option<EmbedderKind>,
    /// Accuracy of the in-process mock confidence oracle.
    #[arg(long, env = "TDF_CONF_ACCURACY")]
    pub conf_accuracy: Option<f64>,
    /// Accuracy of the in-process mock NLI oracle.
    #[arg(long, env = "TDF_NLI_ACCURACY")]
    pub nli_accuracy: Option<f64>,
    #[arg(long, env = "TDF_RETRIES")]
    pub retries: Option<usize>,
    #[arg(long, env = "TDF_TIMEOUT_SECS")]
    pub timeout_secs: Option<u64>,
    #[arg(long, env = "TDF_PARALLELISM")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long, env = "TDF_THRESHOLD")]
    pub threshold: Option<f64>,
    #[arg(long, env = "TDF_MAX_ITERATIONS")]
    pub max_iterations: Option<usize>,
    /// Knowledge-base index: `flat` or `ivf`.
    #[arg(long, env = "TDF_INDEX")]
    pub index: Option<IndexMode>,
    #[arg(long, env = "TDF_NLIST")]
    pub nlist: Option<usize>,
    #[arg(long, env = "TDF_NPROBE")]
    pub nprobe: Option<usize>,
    #[arg(long, env = "TDF_MAX_DEPTH")]
    pub max_depth: Option<usize>,
    #[arg(long, env = "TDF_MIN_SAMPLES_LEAF")]
    pub min_samples_leaf: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatorSettings {
    pub endpoint: Option<String>,
    pub embedder: EmbedderKind,
    pub conf_accuracy: f64,
    pub nli_accuracy: f64,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub config_path: Option<PathBuf>,
    pub filter: FilterConfig,
    /// Whether any index setting was given rather than defaulted.
    pub index_explicit: bool,
    pub distractors: Option<PathBuf>,
    pub evaluator: EvaluatorSettings,
}

impl Settings {
    pub fn resolve(
        common: &CommonArgs,
        eval: &EvaluatorArgs,
        pipeline: &PipelineArgs,
        mode: Option<FilterMode>,
        distractors: Option<&Path>,
    ) -> Result<Self> {
        let file = FileConfig::load(common.config.as_deref())?;
        let seed = common.seed.or(file.seed).unwrap_or(0);
        let index = pipeline.index.or(file.index);
        let nlist = pipeline.nlist.or(file.nlist);
        let nprobe = pipeline.nprobe.or(file.nprobe);
        let index_explicit = index.is_some() || nlist.is_some() || nprobe.is_some();
        let tree_defaults = TreeParams::default();
        let filter = FilterConfig {
            mode: mode.or(file.mode).unwrap_or(FilterMode::SelfNli),
            threshold: pipeline.threshold.or(file.threshold).unwrap_or(DEFAULT_THRESHOLD),
            max_iterations: pipeline.max_iterations.or(file.max_iterations).unwrap_or(DEFAULT_MAX_ITERATIONS),
            parallelism: eval.parallelism.or(file.parallelism).unwrap_or(DEFAULT_PARALLELISM),
            seed,
            retries: eval.retries.or(file.retries).unwrap_or(DEFAULT_RETRIES),
            tree_params: TreeParams {
                max_depth: pipeline.max_depth.or(file.max_depth).unwrap_or(tree_defaults.max_depth),
                min_samples_leaf: pipeline
                    .min_samples_leaf
                    .or(file.min_samples_leaf)
                    .unwrap_or(tree_defaults.min_samples_leaf),
            },
            index_params: IndexParams {
                mode: index.unwrap_or(IndexMode::Flat),
                nlist,
                nprobe: nprobe.unwrap_or(DEFAULT_NPROBE),
                seed: kmeans_seed(seed),
                ..IndexParams::default()
            },
        };
        filter.validate()?;
        filter.index_params.validate()?;
        let evaluator = EvaluatorSettings {
            endpoint: eval.endpoint.clone().or(file.endpoint),
            embedder: eval.embedder.or(file.embedder).unwrap_or(EmbedderKind::Hash),
            conf_accuracy: eval.conf_accuracy.or(file.conf_accuracy).unwrap_or(DEFAULT_CONF_ACCURACY),
            nli_accuracy: eval.nli_accuracy.or(file.nli_accuracy).unwrap_or(DEFAULT_NLI_ACCURACY),
            timeout: Duration::from_secs(eval.timeout_secs.or(file.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS)),
        };
        for (name, acc) in [("conf_accuracy", evaluator.conf_accuracy), ("nli_accuracy", evaluator.nli_accuracy)] {
            anyhow::ensure!((0.0..=1.0).contains(&acc), "{name} {acc} outside [0, 1]");
        }
        anyhow::ensure!(
            evaluator.embedder == EmbedderKind::Hash || evaluator.endpoint.is_some(),
            "remote embedder requires an endpoint"
        );
        Ok(Self {
            config_path: common.config.clone(),
            filter,
            index_explicit,
            distractors: distractors.map(Path::to_path_buf).or(file.distractors),
            evaluator,
        })
    }
}

pub fn kmeans_seed(seed: u64) -> u64 {
    derive_seed(seed, "kmeans")
}

pub fn split_seed(seed: u64) -> u64 {
    derive_seed(seed, "split")
}
