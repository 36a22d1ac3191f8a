//! Instrumental-variable estimators of a constant treatment effect and the
//! end-to-end pipeline that feeds them a learned instrument.

mod iv;
mod linalg;
mod pipeline;

pub use iv::{
    first_stage_strength, fold_labels, ortho_iv, ortho_iv_with_folds, tsls, wald_ratio, wald_report, Diagnostics,
    EffectModel, EstimationReport, EstimatorId, NuisanceModel,
};
pub use pipeline::{
    estimate_effect, estimate_with_instrument, scalar_instrument, Conditioning, PipelineOptions, PipelineOutput,
};
