use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Likelihood used for the outcome head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    /// Gaussian with treatment-specific mean and variance heads.
    Continuous,
    /// Bernoulli on `(w, c)`.
    Binary,
}

/// Hyperparameters of the model and its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub dim_z: usize,
    pub dim_c: usize,
    /// Hidden widths shared by every subnetwork.
    pub hidden: Vec<usize>,
    pub alpha_w: f64,
    pub alpha_y: f64,
    pub opr_enabled: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub outcome: OutcomeKind,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            dim_z: 1,
            dim_c: 10,
            hidden: vec![64, 64],
            alpha_w: 100.0,
            alpha_y: 100.0,
            opr_enabled: true,
            batch_size: 256,
            epochs: 100,
            learning_rate: 1e-3,
            outcome: OutcomeKind::Continuous,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim_z == 0 || self.dim_c == 0 {
            return Err(Error::spec(format!(
                "latent sizes must be positive (dim_z={}, dim_c={})",
                self.dim_z, self.dim_c
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::spec("hidden widths must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::spec(format!("batch_size={} must be at least 2", self.batch_size)));
        }
        if self.epochs == 0 {
            return Err(Error::spec("epochs must be at least 1"));
        }
        for (name, v) in [("alpha_w", self.alpha_w), ("alpha_y", self.alpha_y)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::spec(format!("{name}={v} must be a finite non-negative number")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::spec(format!("learning_rate={} must be positive", self.learning_rate)));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}
