//! Simulator for over-the-air federated learning with norm-clipping power
//! control, Top-k/projection compression and sparse recovery, plus an
//! evaluator for the matching convergence bound.

pub mod bound;
pub mod channel;
pub mod compression;
pub mod data;
pub mod error;
pub mod exec;
pub mod harness;
pub mod model;
pub mod projection;
pub mod protocol;
pub mod recovery;
pub mod rng;
pub mod sgd;
pub mod vector;

pub use error::{Error, Result};
pub use exec::Execution;
pub use vector::ModelVector;
