//! Experiment configuration, real-world table ingestion and the command
//! runners that write result artifacts.

mod config;
mod ingest;
mod run;

pub use config::{Comparison, ExperimentConfig, ScenarioConfig, TableSource, Threshold, Transform, CONFIG_VERSION};
pub use ingest::{load_tabular_dataset, read_tabular_dataset, sha256_hex, CategoricalEncoding, LoadedTable};
pub use run::{
    run_command, run_experiment, run_variants, true_instrument, variants, write_loss_traces, write_pcc_csv,
    write_replications_csv, write_variant_summary_csv, Command, DataSource, DataSummary, Overrides, Report, RunOutcome,
    RunRecord, Timing, TrainingSummary, Variant, VariantSummary, ALPHA_GRID, LOSS_TRACE_HEADER, PCC_HEADER,
    REPLICATIONS_HEADER, REPORT_FORMAT, REPORT_VERSION,
};
