//! Sparse-coding attention laboratory.
//!
//! Attention is recast as sparse coding: inputs are decomposed into
//! coefficients against an input-dependent encoding dictionary, optionally
//! sparsified by soft-thresholding, transferred from context tasks to the
//! target task, and decoded against a second dictionary. The crate bundles
//! the numerics to train such models from scratch, synthetic compositional
//! datasets, a training loop, and evaluation metrics.

pub mod attention;
pub mod data;
pub mod error;
pub mod eval;
pub mod kv;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
