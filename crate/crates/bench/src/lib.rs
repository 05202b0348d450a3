//! Config parsing, scenario runners and file formats of the `twistbench`
//! command-line tool.

pub mod config;
pub mod error;
pub mod io;
pub mod run;
pub mod units;

pub use config::{parse_config, ConfigErrors, ExperimentConfig, Scenario};
pub use error::BenchError;
pub use run::{decode_image, run_scenario, Decoded, RunManifest};
