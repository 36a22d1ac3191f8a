pub mod diffcore;
pub mod divvae;
pub mod error;
pub mod estimators;
pub mod evalkit;
pub mod experiment;
pub mod scmgen;

pub use error::{Error, Result};
