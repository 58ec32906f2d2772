//! Robust tensor decomposition with an atomic-norm regularizer.
//!
//! A partially corrupted tensor `Z = X + S` is split into a low-CP-rank part
//! `X` and a sparse part `S` by minimizing a smooth factored objective with
//! L-BFGS. Around that solver sit tools for checking recovery conditions,
//! convex baselines, an LDA topic-model pipeline built on moment tensors, and
//! a phase-transition experiment harness.

// `!(x > 0.0)` is how non-finite parameters are rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod moments;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use tensor::{DenseTensor, KruskalTensor};

// Guide chapters, compiled and run as doc-tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/atomic-norm.md")]
    mod atomic_norm {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/topic-models.md")]
    mod topic_models {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
