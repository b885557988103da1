//! Exact neural tangent kernels and the machinery around them.
//!
//! This crate is the allocation-only algorithmic core: the closed-form
//! fully-connected NTK/NNGP recursion, the convolutional NTK with global
//! average pooling, kernel SVM (SMO) and kernel ridge solvers working on
//! precomputed Gram matrices, a finite-width network used as a convergence
//! oracle, and the evaluation protocols and comparison statistics.
//!
//! It builds without `std` (`default-features = false`); the `std` feature
//! adds thread-level parallelism over kernel pairs, grid points and
//! episodes. File formats, dataset loading, and the command-line front end
//! live in the companion `ntk` crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cntk;
pub mod error;
pub mod gram;
pub mod harness;
pub mod kernel;
pub mod net;
pub mod par;
pub mod ridge;
pub mod rng;
pub mod svm;

pub use error::{Error, Result};
pub use gram::GramMatrix;
pub use kernel::{gram_matrix, kappa0, kappa1, normalize_gram, ntk_pair, KernelConfig, Variant};
