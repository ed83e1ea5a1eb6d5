//! Library side of the `hessquot` command: config parsing, run drivers and
//! report writers. The binary is a thin clap wrapper around these.

pub mod config;
pub mod expr;
pub mod report;
pub mod run;

pub use config::{parse_config, ConfigError, RunConfig};
pub use run::{run_solve, RunResult, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER};
