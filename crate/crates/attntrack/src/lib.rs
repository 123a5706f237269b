//! File formats, checkpoints and the command-line driver for
//! `attntrack-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod log;
pub mod mot;
pub mod report;
pub mod seqdir;

pub use error::{CliError, Result};
