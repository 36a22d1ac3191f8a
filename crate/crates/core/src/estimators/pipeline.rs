use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::iv::{ortho_iv, tsls, wald_report, EstimationReport, EstimatorId, NuisanceModel};
use super::linalg::ols;
use crate::diffcore::Tensor;
use crate::divvae::{extract_iv, posterior_mean_c, train, TrainedModel, VaeConfig};
use crate::error::{Error, Result};
use crate::evalkit::{estimation_bias, pcc_profile};
use crate::scmgen::Dataset;

/// Which variables the downstream estimator adjusts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    /// The observed covariates.
    #[default]
    Covariates,
    /// Posterior means of the auxiliary latent `C`.
    Latent,
    /// No adjustment.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub conditioning: Conditioning,
    pub folds: usize,
    pub nuisance: NuisanceModel,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            conditioning: Conditioning::Covariates,
            folds: 2,
            // Linear nuisances are inconsistent when the outcome is nonlinear
            // in X; squares make the downstream estimate robust to that.
            nuisance: NuisanceModel::QuadraticRidge { lambda: 1e-3 },
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::spec(format!("folds={} must be at least 2", self.folds)));
        }
        self.nuisance.validate()
    }
}

/// Everything produced by one end-to-end run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: EstimationReport,
    pub model: TrainedModel,
    /// Standardized learned instrument, `n x dim_z`.
    pub iv: Tensor,
    /// Posterior means of `C`, `n x dim_c`.
    pub latent_c: Tensor,
}

/// Collapse a multi-column instrument into one column: the first-stage
/// fitted value of `w` on `(1, Z)`. A single column is returned unchanged.
pub fn scalar_instrument(z: &Tensor, w: &[f64]) -> Result<Vec<f64>> {
    if z.cols() == 1 {
        return Ok(z.column(0));
    }
    let n = z.rows();
    let design = DMatrix::from_fn(n, z.cols() + 1, |i, j| if j == 0 { 1.0 } else { z.get(i, j - 1) });
    let coef = ols(&design, &DVector::from_column_slice(w), "instrument projection")?;
    Ok((&design * coef).iter().copied().collect())
}

/// Run a downstream estimator with `z` as the instrument.
pub fn estimate_with_instrument(
    dataset: &Dataset,
    z: &[f64],
    controls: Option<&Tensor>,
    estimator: EstimatorId,
    options: &PipelineOptions,
    seed: u64,
) -> Result<EstimationReport> {
    let mut report = match estimator {
        EstimatorId::Wald => wald_report(z, &dataset.w, &dataset.y, seed)?,
        EstimatorId::Tsls => tsls(z, &dataset.w, &dataset.y, controls)?,
        EstimatorId::OrthoIv => {
            let empty = Tensor::zeros(dataset.n(), 0);
            ortho_iv(
                z,
                &dataset.w,
                &dataset.y,
                controls.unwrap_or(&empty),
                options.folds,
                options.nuisance,
                seed,
            )?
        }
    };
    report.seed = seed;
    if let Some(truth) = dataset.beta_true {
        report.bias_pct = Some(estimation_bias(report.beta_hat, truth)?);
    }
    Ok(report)
}

/// Train the model, extract the instrument and estimate the effect.
pub fn estimate_effect(
    dataset: &Dataset,
    cfg: &VaeConfig,
    estimator: EstimatorId,
    options: &PipelineOptions,
) -> Result<PipelineOutput> {
    options.validate()?;
    let start = Instant::now();
    let model = train(dataset, cfg)?;
    let iv = extract_iv(&model.params, dataset)?;
    let latent_c = posterior_mean_c(&model.params, dataset)?;
    let z = scalar_instrument(&iv, &dataset.w)?;
    let controls = match options.conditioning {
        Conditioning::Covariates => Some(&dataset.x),
        Conditioning::Latent => Some(&latent_c),
        Conditioning::None => None,
    };
    let mut report = estimate_with_instrument(dataset, &z, controls, estimator, options, cfg.seed)?;
    // A collapsed C dimension has no defined correlation; the profile is a
    // diagnostic and must not sink the estimate.
    report.diagnostics.pcc_profile = pcc_profile(&z, &latent_c).ok();
    report.diagnostics.runtime_seconds = Some(start.elapsed().as_secs_f64());
    Ok(PipelineOutput {
        report,
        model,
        iv,
        latent_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scmgen::{generate, OutcomeForm, ScenarioSpec};

    #[test]
    fn report_contract() {
        let ds = generate(&ScenarioSpec::single_siv(300, OutcomeForm::Linear, 2)).unwrap();
        let cfg = VaeConfig {
            hidden: vec![8],
            dim_c: 3,
            epochs: 2,
            batch_size: 64,
            seed: 17,
            ..Default::default()
        };
        for est in [EstimatorId::Wald, EstimatorId::Tsls, EstimatorId::OrthoIv] {
            let out = estimate_effect(&ds, &cfg, est, &PipelineOptions::default()).unwrap();
            let r = &out.report;
            assert_eq!(r.method, est);
            assert_eq!(r.seed, 17);
            assert!(r.diagnostics.runtime_seconds.is_some());
            let bias = r.bias_pct.unwrap();
            assert!((bias - (r.beta_hat - 2.0).abs() / 2.0 * 100.0).abs() < 1e-9);
            assert_eq!(out.iv.shape(), &[300, 1]);
            assert_eq!(out.latent_c.shape(), &[300, 3]);
        }
    }

    #[test]
    fn multi_column_instrument_projects_onto_treatment() {
        let z = Tensor::matrix(4, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        // w = 1 + 2 z1 - z2 exactly
        let w = vec![3.0, 0.0, 2.0, 1.0];
        let s = scalar_instrument(&z, &w).unwrap();
        for (a, b) in s.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
