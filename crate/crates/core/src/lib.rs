//! Knowledge-graph augmented training with bias detection and mitigation.
//!
//! This crate is the allocation-only numerical core. It carries no IO: file
//! formats, checkpoints and the command line live in the `kgat` crate.
//!
//! The pieces, bottom up:
//!
//! - [`numeric`]: dense [`Matrix`], a reverse-mode [`Tape`], finite-difference
//!   checking and the Adam rule.
//! - [`graph`]: triple store, adjacency and surface-form entity linking.
//! - [`gcn`]: symmetric-normalized graph convolution over the triple store.
//! - [`model`]: mean-pooled text encoder, scaled dot-product attention over
//!   linked entities, concatenation fusion and the binary head.
//! - [`train`]: the minimax loop, coupled through gradient reversal.
//! - [`fairness`]: demographic parity, equal opportunity and WEAT.
//! - [`counterfactual`]: attribute-swap augmentation.
//! - [`causal`]: discrete backdoor adjustment.
//! - [`data`]: records, tokenization and the seeded biased generator.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod causal;
pub mod counterfactual;
pub mod data;
pub mod demo;
pub mod fairness;
pub mod gcn;
pub mod graph;
pub(crate) mod math;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod train;

pub use numeric::{AdamConfig, AdamState, Gradients, Matrix, NumericError, Tape, Var};
