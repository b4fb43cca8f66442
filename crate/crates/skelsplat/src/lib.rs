//! File formats, configuration and the command-line front end for
//! `skelsplat-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;

pub use error::{IoError, Result};
