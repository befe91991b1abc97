//! Dependency-aware graph noise generation and a variational GNN that
//! recovers clean structure and labels from graphs whose feature, structure
//! and label noise are causally linked.

pub mod cli;
pub mod dagnn;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod noise;
pub mod sparse;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
