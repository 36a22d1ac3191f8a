//! Disentangled instrumental-variable VAE: two Gaussian encoders for the
//! instrument latent `Z` and the auxiliary latent `C`, a shared covariate
//! decoder, a treatment predictor on `(z, c)` and an outcome predictor on
//! `(w, c)` only, so `Z` reaches the outcome through the treatment alone.

mod config;
mod loss;
mod model;
mod train;

pub use config::{OutcomeKind, VaeConfig};
pub use loss::{grad_check_loss, kl_diag_gauss, loss_terms, opr, total_loss, LossTerm, LossTerms};
pub use model::{
    model_forward, Batch, ForwardOutputs, ModelParams, Noise, OutcomeHeads, OutcomeParams, Standardization,
    PARAMS_FORMAT_VERSION, STD_FLOOR,
};
pub use train::{extract_iv, posterior_mean_c, posterior_mean_z, train, write_loss_trace, TrainedModel};
