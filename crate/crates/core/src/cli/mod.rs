//! Front end for the `funcmech` binary: configuration and orchestration.

pub mod config;
pub mod run;

pub use config::{parse_config, DataSource, Preparation, RawConfig, RunConfig};
pub use run::{bench, load_data, synth, train, validate_suite, Artifacts};
