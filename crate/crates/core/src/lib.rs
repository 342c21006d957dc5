//! Simulated remote power side-channel lab.
//!
//! Synthesizes TDC sensor traces of an iterative AES-128 core placed on an
//! abstract FPGA slice grid, then attacks them with last-round CPA.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aes;
pub mod cpa;
pub mod error;
pub mod leakage;
pub mod platform;
pub mod rng;
pub mod scenario;

pub use aes::Block;
pub use error::{Error, Result};
