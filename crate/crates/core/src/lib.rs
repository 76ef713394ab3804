//! Core algorithms for encrypted SVM inference.
//!
//! Everything in this crate is `no_std` + `alloc`: RNS arithmetic in the
//! negacyclic ring `Z_q[X]/(X^n + 1)`, a leveled CKKS scheme on top of it,
//! a hybrid polynomial/RBF kernel SVM trainer, polynomial stand-ins for the
//! RBF exponential, the encrypted scoring pipeline and evaluation metrics.
//!
//! IO, file formats and the command-line driver live in the `hesvm` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;

pub mod approx;
pub mod ckks;
mod error;
pub mod inference;
pub mod math;
pub mod matrix;
pub mod metrics;
pub mod ring;
pub mod svm;

pub use error::{Error, Result};
