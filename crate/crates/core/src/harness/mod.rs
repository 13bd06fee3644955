//! Data ingestion, experiment configuration, rolling-origin evaluation and
//! report tables.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod report;

pub use config::{
    ExperimentConfig, ModeConfig, ModelConfig, Window, NAIVE_FINAL_SIZE, NAIVE_MODEL,
};
pub use experiment::{fit_models, load_inputs, run_experiment, substream};
pub use ingest::{ingest_csv, ingest_reader};
pub use report::{
    emit_fanchart, emit_report, load_report, EvaluationReport, FitReport, ForecastMode,
    ForecastRecord, ModelReport, MultivariateRecord, MultivariateTarget, PeakWeekRecord,
};
