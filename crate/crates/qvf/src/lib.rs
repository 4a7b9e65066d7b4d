//! File formats, parallel execution and the experiment runner behind the
//! `qvf` command-line tool. Numerical work lives in `qvf_core`.

pub mod cache;
pub mod checkpoint;
pub mod config;
mod error;
pub mod export;
pub mod idx;
pub mod manifest;
pub mod parallel;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
pub use qvf_core as core;
