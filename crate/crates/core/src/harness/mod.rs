//! Experiment configuration, data ingestion, replication loops and result files.

pub mod config;
pub mod ingest;
pub mod results;
pub mod runner;

pub use config::{ExperimentKind, ExperimentSpec, ModelSpec, TestSize};
pub use ingest::{load_csv, parse_csv, RealDataset};
pub use results::{fit_results, load_results, save_results, summarize, CellSummary, MetricsReport};
pub use runner::{
    gamma_trends, profile_speedup, run_denoise_bench, run_real, run_real_on, run_sim1, run_sim2,
    summarize_real, with_threads, GammaTrend, RealSummary, SpeedupProfile,
};
