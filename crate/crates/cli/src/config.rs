//! Experiment configuration files.
//!
//! A config is one JSON object. `gmm` and `perturbation` may be given inline or as a path to
//! a JSON file; relative paths, including `output_dir`, are resolved against the directory
//! holding the config.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rods_core::harness::LabelRule;
use rods_core::{GaussianMixture, PerturbationSpec, SamplerConfig, ScheduleSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;

/// An inline value or the path of a JSON file holding it.
#[derive(Debug, Clone)]
enum Inline<T> {
    Value(T),
    Path(PathBuf),
}

impl<'de, T: DeserializeOwned> Deserialize<'de> for Inline<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(p) => Ok(Inline::Path(p.into())),
            v => serde_json::from_value(v).map(Inline::Value).map_err(serde::de::Error::custom),
        }
    }
}

impl<T: DeserializeOwned> Inline<T> {
    fn resolve(self, base: &Path, field: &str) -> Result<T> {
        match self {
            Inline::Value(v) => Ok(v),
            Inline::Path(p) => {
                let path = base.join(p);
                let text =
                    fs::read_to_string(&path).with_context(|| format!("{field}: cannot read {}", path.display()))?;
                parse_json(&text, &path)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareBlock {
    pub baseline: SamplerConfig,
    pub treatment: SamplerConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocBlock {
    /// Explicit grid; omitted means every distinct observed statistic plus 0 and `inf`.
    #[serde(default)]
    pub thresholds: Option<Vec<ThresholdValue>>,
    #[serde(default = "default_target_tpr")]
    pub target_tpr: f64,
}

impl Default for RocBlock {
    fn default() -> Self {
        Self { thresholds: None, target_tpr: default_target_tpr() }
    }
}

fn default_target_tpr() -> f64 {
    0.7
}

/// A threshold written as a number or as `"inf"`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(transparent)]
pub struct ThresholdValue(#[serde(with = "rods_core::serde_ext::extended_f64")] pub f64);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    gmm: Inline<GaussianMixture>,
    #[serde(default)]
    perturbation: Option<Inline<PerturbationSpec>>,
    schedule: ScheduleSpec,
    #[serde(default)]
    sampler: Option<SamplerConfig>,
    #[serde(default)]
    compare: Option<CompareBlock>,
    #[serde(default)]
    label_rule: LabelRule,
    #[serde(default)]
    roc: RocBlock,
    n_chains: usize,
    #[serde(default)]
    master_seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub gmm: GaussianMixture,
    pub perturbation: Option<PerturbationSpec>,
    pub schedule: ScheduleSpec,
    pub sampler: Option<SamplerConfig>,
    pub compare: Option<CompareBlock>,
    pub label_rule: LabelRule,
    pub roc: RocBlock,
    pub n_chains: usize,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

/// Parse failure with the JSON path of the offending field and its position in the file.
#[derive(Debug)]
pub struct ConfigError {
    file: PathBuf,
    field: String,
    line: usize,
    column: usize,
    message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: ", self.file.display(), self.line, self.column)?;
        if self.field.is_empty() || self.field == "." {
            write!(f, "{}", self.message)
        } else {
            write!(f, "field `{}`: {}", self.field, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_json<T: DeserializeOwned>(text: &str, file: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        // serde_json appends its own " at line L column C"; the prefix already carries it
        let message = message.split(" at line ").next().unwrap_or(&message).to_string();
        anyhow!(ConfigError { file: file.to_path_buf(), field, line: inner.line(), column: inner.column(), message })
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text, path)
    }

    /// Parses `text` as if read from `path`, resolving referenced files next to it.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let raw: RawConfig = parse_json(text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let gmm = raw.gmm.resolve(base, "gmm")?;
        let perturbation = raw.perturbation.map(|p| p.resolve(base, "perturbation")).transpose()?;
        if let Some(p) = &perturbation {
            p.validate(gmm.dim()).context("perturbation does not match the mixture")?;
        }
        raw.schedule.build().context("schedule")?;
        if let Some(s) = &raw.sampler {
            s.validate().context("sampler")?;
        }
        if let Some(c) = &raw.compare {
            c.baseline.validate().context("compare.baseline")?;
            c.treatment.validate().context("compare.treatment")?;
        }
        raw.label_rule.validate().context("label_rule")?;
        if raw.n_chains == 0 {
            return Err(anyhow!("n_chains must be at least 1"));
        }
        if !(0.0..=1.0).contains(&raw.roc.target_tpr) {
            return Err(anyhow!("roc.target_tpr {} is outside [0, 1]", raw.roc.target_tpr));
        }
        Ok(Self {
            gmm,
            perturbation,
            schedule: raw.schedule,
            sampler: raw.sampler,
            compare: raw.compare,
            label_rule: raw.label_rule,
            roc: raw.roc,
            n_chains: raw.n_chains,
            master_seed: raw.master_seed,
            output_dir: base.join(raw.output_dir),
        })
    }
}
