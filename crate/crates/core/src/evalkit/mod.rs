//! Metrics and the seeded replication harness.

mod metrics;
mod replicate;

pub use metrics::{estimation_bias, pcc_profile, pdf_compare, pearson, PccProfile, PdfComparison, PDF_BINS, PDF_RANGE};
pub use replicate::{
    mean_and_std, replicate, run_replications, write_records_csv, ReplicationRecord, ReplicationSummary,
};
