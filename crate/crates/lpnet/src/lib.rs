//! File formats, image IO, paired corpora and the command line around
//! `lpnet-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
mod error;
pub mod image_io;

pub use error::{CliError, Result};
