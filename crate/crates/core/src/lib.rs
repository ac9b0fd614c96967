//! Multi-view learning toolkit.
//!
//! Four pipelines share one numerical core:
//!
//! * [`mvfs`]: tensor-product multi-view feature selection by recursive
//!   elimination over factorized SVM weights.
//! * [`subgraph`]: gSpan enumeration of connected subgraphs scored against
//!   side-view and label constraints, with branch-and-bound pruning.
//! * [`bne`]: partially symmetric CP factorization of stacked networks with
//!   side-information guidance, orthogonal subject factors and a coupled
//!   ridge classifier.
//! * [`deepmood`]: per-view GRU encoders fused by FC, FM or MVM heads.
//!
//! [`tensor`] and [`numkit`] hold the shared algebra and solvers, [`dataio`]
//! the file formats and synthetic generators, and [`cli`] the batch front-end
//! used by the `mvkit` binary.

pub mod bne;
pub mod cli;
pub mod dataio;
pub mod deepmood;
pub mod error;
pub mod mvfs;
pub mod numkit;
pub mod oracle;
pub mod selftest;
pub mod subgraph;
pub mod tensor;

pub use error::{Error, Result};

/// Dense column-major matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
