//! Differentially private approximation of symmetric attention matrices.
//!
//! Given a dataset `X` (columns are the private data elements) the Gram matrix
//! `A = XX^T` is released through the Gaussian sampling mechanism as
//! `B = (1/k) sum g_i g_i^T` with `g_i ~ N(0, A)`. The attention map
//! `D(B)^{-1} f(B)` with `f` in `{exp, cosh}` then approximates
//! `D(A)^{-1} f(A)` entrywise.
//!
//! Besides the mechanism itself the crate carries everything needed to check
//! the guarantees numerically: the deterministic perturbation chain from
//! Loewner closeness to attention error, the sensitivity of `XX^T` under a
//! single-column change, and the privacy-loss random variable with its
//! closed-form mean, sub-exponential tail and Monte-Carlo estimate.
//!
//! Matrix "infinity norms" throughout are entrywise max-absolute-value.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod attention;
pub mod dataset;
mod error;
pub mod linalg;
pub mod mechanism;
pub mod pipeline;
pub mod privacy;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
