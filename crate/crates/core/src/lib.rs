//! Scalable in-context learning for tabular classification.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithm of the
//! pipeline: preprocessing and fold splitting, an exact ball-tree neighbour
//! index, k-means (plain and size-capped), the sparse mixture of in-context
//! prompters with its router, a differentiable reference in-context predictor
//! with adapter parameters, bootstrap adapter finetuning, and the
//! rank/Condorcet/Wilcoxon evaluation harness.
//!
//! File formats, process bridges and the command line live in the `mpfn`
//! companion crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod capfn;
pub mod clustering;
pub mod data;
pub mod evalrank;
pub mod matrix;
pub mod micp;
pub mod neighbors;
pub mod optim;
pub mod predictor;
pub mod rng;

pub use matrix::Matrix;
