//! File formats, parallel cross-validation, reports and the command line
//! for the `mermix_core` fusion model.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod mef;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
pub use mermix_core as core;
