//! File formats, dataset loading, the benchmark runner and the command-line
//! front end for [`dml_s2r_core`].

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataio;
pub mod error;
pub mod formats;
pub mod schema;

pub use error::{AppError, Result};
