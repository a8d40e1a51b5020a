//! Market-state detection from epoch-wise correlation networks.
//!
//! The pipeline turns a price panel into log returns, locally normalizes
//! them, slices the timeline into disjoint epochs, builds a Pearson matrix
//! per epoch over that epoch's top-K coins, keeps only the correlations that a
//! white-noise null cannot explain, compares the resulting graphs with a
//! Weisfeiler-Lehman subtree kernel, and clusters epochs into market states
//! with an eigengap-selected spectral k-means.

// `!(x > y)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod correlation;
pub mod error;
pub mod ingest;
pub mod kernel;
pub mod linalg;
pub mod network;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
