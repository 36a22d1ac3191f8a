//! Seeded generators for synthetic structural causal models with a latent
//! confounder and surrogate instruments, plus the [`Dataset`] container.

mod dataset;
mod generate;
mod spec;

pub use dataset::{Dataset, LatentTruth, OUTCOME_COLUMN, TREATMENT_COLUMN};
pub use generate::{
    generate, generate_highdim, generate_multi_siv, generate_single_siv, propensity, propensity_single_siv, BETA_TRUE,
};
pub use spec::{Generator, GeneratorId, OutcomeForm, ScenarioSpec, HIGHDIM_DIMS};
