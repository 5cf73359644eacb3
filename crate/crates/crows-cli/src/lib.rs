//! File formats, synthetic data, and the experiment harness around the
//! core pipeline: everything that needs a filesystem or a clock lives
//! here, keeping the core crate platform-free.

pub mod checkpoint;
pub mod config;
pub mod csv_data;
pub mod error;
pub mod harness;
pub mod pattern_io;
pub mod synth;
pub mod trace;

pub use error::{CliError, Result};
