use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::divvae::VaeConfig;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, PipelineOptions};
use crate::evalkit::PDF_BINS;
use crate::scmgen::{GeneratorId, OutcomeForm, ScenarioSpec};

/// The only accepted value of `version`.
pub const CONFIG_VERSION: u32 = 1;

/// Synthetic data source. The seed is not part of it: replication `i` uses
/// the experiment's base seed plus `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub generator: GeneratorId,
    pub n: usize,
    pub outcome: OutcomeForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub siv_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl ScenarioConfig {
    pub fn spec(&self, seed: u64) -> Result<ScenarioSpec> {
        ScenarioSpec::from_parts(self.generator, self.n, self.outcome, self.siv_count, self.dim, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
}

/// Turns a numeric column into a 0/1 indicator: `value <op> threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub op: Comparison,
    pub value: f64,
}

impl Threshold {
    pub fn apply(&self, x: f64) -> f64 {
        let hit = match self.op {
            Comparison::Lt => x < self.value,
            Comparison::Le => x <= self.value,
            Comparison::Gt => x > self.value,
            Comparison::Ge => x >= self.value,
        };
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Natural logarithm; rows with non-positive values are rejected.
    Log,
}

/// Mapping from a user-supplied CSV to treatment, outcome and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSource {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub treatment: String,
    pub outcome: String,
    /// Covariate columns; defaults to every other column not in `exclude`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<String>,
    /// Covariates to one-hot encode (first level in sorted order dropped).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categorical: Vec<String>,
    /// Also one-hot encode every covariate holding a non-numeric value.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub infer_categorical: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment_threshold: Option<Threshold>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_transform: Option<Transform>,
    /// Expected hex SHA-256 of the file; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    /// Reference effect, used for bias reporting when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_reference: Option<f64>,
}

impl TableSource {
    pub fn validate(&self) -> Result<()> {
        if self.treatment == self.outcome {
            return Err(Error::spec("treatment and outcome must be different columns"));
        }
        if let Some(t) = &self.treatment_threshold {
            if !t.value.is_finite() {
                return Err(Error::spec("treatment threshold must be finite"));
            }
        }
        if let Some(b) = self.beta_reference {
            if !b.is_finite() || b == 0.0 {
                return Err(Error::spec("beta_reference must be finite and non-zero"));
            }
        }
        Ok(())
    }
}

fn default_estimator() -> EstimatorId {
    EstimatorId::OrthoIv
}

fn one() -> usize {
    1
}

fn default_bins() -> usize {
    PDF_BINS
}

/// One experiment: a data source, model and estimator settings, and the
/// replication plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<TableSource>,
    #[serde(default)]
    pub vae: VaeConfig,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorId,
    #[serde(default)]
    pub pipeline: PipelineOptions,
    #[serde(default = "one")]
    pub reps: usize,
    #[serde(default = "one")]
    pub jobs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub pdf_bins: usize,
}

impl ExperimentConfig {
    /// Parse and validate. Every failure is a [`Error::Spec`].
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::spec(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes).map_err(|e| Error::spec(format!("config is not UTF-8: {e}")))?;
        Self::from_json_str(text)
    }

    /// Load a config file; a relative dataset path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::spec(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_slice(&bytes)?;
        if let Some(ds) = &mut cfg.dataset {
            if ds.path.is_relative() {
                if let Some(dir) = path.parent() {
                    ds.path = dir.join(&ds.path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::spec(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        match (&self.scenario, &self.dataset) {
            (Some(s), None) => {
                s.spec(self.seed)?;
            }
            (None, Some(d)) => d.validate()?,
            _ => return Err(Error::spec("exactly one of `scenario` and `dataset` must be given")),
        }
        self.vae.validate()?;
        self.pipeline.validate()?;
        if self.reps == 0 {
            return Err(Error::spec("reps must be at least 1"));
        }
        if self.jobs == 0 {
            return Err(Error::spec("jobs must be at least 1"));
        }
        if self.pdf_bins < 2 {
            return Err(Error::spec("pdf_bins must be at least 2"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"version": 1, "scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(cfg.reps, 1);
        assert_eq!(cfg.jobs, 1);
        assert_eq!(cfg.estimator, EstimatorId::OrthoIv);
        assert_eq!(cfg.vae, VaeConfig::default());
        assert_eq!(cfg.pdf_bins, 50);
        let again = ExperimentConfig::from_json_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejected_configs() {
        for bad in [
            r#"{"scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"}}"#,
            r#"{"version": 2, "scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"}}"#,
            r#"{"version": 1, "scenario": {"generator": "bogus", "n": 100, "outcome": "linear"}}"#,
            r#"{"version": 1, "scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"}, "vae": {"alpha_W": 1}}"#,
            r#"{"version": 1, "scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"}, "typo": 1}"#,
            r#"{"version": 1, "scenario": {"generator": "multi_siv", "n": 100, "outcome": "linear"}}"#,
            r#"{"version": 1}"#,
            r#"{"version": 1, "scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"}, "reps": 0}"#,
            r#"{"version": 1, "scenario": {"generator": "single_siv", "n": 100, "outcome": "linear"},
                "dataset": {"path": "a.csv", "treatment": "w", "outcome": "y"}}"#,
            r#"{"version": 1, "dataset": {"path": "a.csv", "treatment": "w", "outcome": "w"}}"#,
            "not json",
        ] {
            let err = ExperimentConfig::from_json_str(bad).unwrap_err();
            assert!(matches!(err, Error::Spec(_)), "{bad}: {err}");
        }
    }

    #[test]
    fn threshold_ops() {
        let t = |op| Threshold { op, value: 30.0 };
        assert_eq!(t(Comparison::Lt).apply(29.9), 1.0);
        assert_eq!(t(Comparison::Lt).apply(30.0), 0.0);
        assert_eq!(t(Comparison::Le).apply(30.0), 1.0);
        assert_eq!(t(Comparison::Gt).apply(30.0), 0.0);
        assert_eq!(t(Comparison::Ge).apply(30.0), 1.0);
    }

    #[test]
    fn relative_dataset_path_resolves_against_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(
            &path,
            r#"{"version": 1, "dataset": {"path": "data/x.csv", "treatment": "w", "outcome": "y"}}"#,
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.dataset.unwrap().path, dir.path().join("data/x.csv"));
    }
}
