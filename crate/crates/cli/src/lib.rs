//! Experiment runner around `bsdex-core`: declarative TOML configs, shipped
//! reference presets and CSV result tables.

pub mod config;
pub mod presets;
pub mod run;

pub use config::ExperimentConfig;
pub use run::{run_lsmc, run_solve, run_sparse, run_validate, sup_error_window};
