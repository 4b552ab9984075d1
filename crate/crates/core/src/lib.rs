//! Unsupervised multilingual alignment of word embeddings through a
//! free-support Wasserstein barycenter used as a pivot language.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod barycenter;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod embed_io;
pub mod eval;
pub mod error;
pub mod gromov;
pub mod ot;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
