//! Hybrid quantum–classical feature extraction and fusion.
//!
//! The crate is `no_std` (with `alloc`). It contains a dense state-vector
//! simulator for small registers, a sliding-window quanvolutional layer, a
//! small reverse-mode classical network stack, the static / dynamic /
//! temperature-scaled fusion strategies, and binary-classification metrics.
//! File formats, parallel execution and the command-line runner live in the
//! companion `qvf` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod exec;
pub mod fusion;
pub mod math;
pub mod metrics;
pub mod neural;
pub mod quanv;
pub mod qsim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
