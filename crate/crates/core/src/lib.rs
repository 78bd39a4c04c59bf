//! Structural causal model "digital twins" for tabular data.
//!
//! The crate covers the whole loop: ingest a typed table, discover a causal
//! graph with the PC algorithm, fit interpretable per-node mechanisms, check
//! the generated data against the real data, then stress-test a classifier by
//! scaling mechanism coefficients and watching where its metrics break.

pub mod attribution;
pub mod classifier;
pub mod discovery;
pub mod drift;
pub mod envelope;
mod error;
pub mod graph;
pub mod monitors;
pub mod scm;
pub mod stats;
pub mod tabular;
pub mod validation;

pub use error::{Error, Result};
