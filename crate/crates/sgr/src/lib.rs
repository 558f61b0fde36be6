//! Scene-graph reasoning engine for tool-tissue interaction understanding.
//!
//! The crate learns and infers parse graphs over surgical scenes: which
//! instruments interact with the tissue (adjacency) and what each node is
//! doing (12 interaction classes, multi-label). The network is a graph
//! parsing pipeline — an attention link function predicts the adjacency
//! matrix, SageConv embeds nodes with neighbourhood features, messages are
//! summarised per node and folded into hidden states by a GRU, and a
//! readout head emits per-node interaction probabilities.
//!
//! Supporting pieces: a small f64 tensor library with reverse-mode
//! autodiff and a finite-difference gradient checker ([`tensor`]),
//! label-smoothing feature extraction ([`features`]), weighted multi-label
//! hinge training ([`losses`], [`optim`]), an evaluation suite
//! ([`metrics`]), a deterministic synthetic dataset generator and file
//! formats ([`data`]), and the end-to-end training pipeline ([`train`]).
//!
//! Start with the `examples/` directory: each example is a runnable tour
//! of one capability. The `sgr` binary wraps the same library calls for
//! batch use.

pub mod data;
pub mod error;
pub mod features;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Result, SgrError};


pub use tensor::{Tape, Tensor};
