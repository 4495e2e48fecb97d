//! Scenario bundles, file formats, run configuration and the command-line front end.

pub mod bundle;
pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod run;

pub use error::{Error, Result};
