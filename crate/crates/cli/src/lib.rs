//! Scenario files, batch runs and artifact output for the `symctl` binary.

pub mod config;
pub mod error;
pub mod output;

pub use config::{load_config, load_scenario, parse_scenario, resolve_scenario};
pub use error::CliError;
pub use output::{config_hash, csv_header, emit_plot_script, run_scenario, write_composite, write_csv, RunRecord};

/// Output directory used when `--out` is not given.
pub fn default_out_dir() -> std::path::PathBuf {
    std::env::var_os("SYMCTL_OUT").map(Into::into).unwrap_or_else(|| "symctl-out".into())
}
