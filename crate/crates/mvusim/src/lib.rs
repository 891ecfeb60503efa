//! File formats, reports and drivers around `mvusim-core`.

pub mod config_file;
mod error;
pub mod matrix_io;
pub mod nid;
pub mod report;
pub mod sweep;
pub mod trace_dump;

pub use config_file::{parse_config, parse_config_str, ConfigFile, LayerParams, SweepSpec, SweptParameter};
pub use error::{CliError, Result};
