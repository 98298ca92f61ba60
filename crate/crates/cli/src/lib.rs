//! Configuration-driven experiments for the slow-fast scheme library.

// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod table;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ExperimentKind};
pub use experiments::{run_experiment, schema, terminal_gaps, write_tables, RunError};
pub use table::{Cell, ResultTable, TableError};
