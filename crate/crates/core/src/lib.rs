//! Production-state-aware industrial network traffic modeling.
//!
//! The machine's production states evolve as a semi-Markov process
//! ([`smp`]); within each state, packet interarrival times and sizes come
//! from generative models ([`generative`]) built on a small dense-network
//! substrate ([`neural`]). [`traffic`] stitches both into synthetic packet
//! traces and [`eval`] scores models with histogram KL divergence.

pub mod domain;
pub mod error;
pub mod eval;
pub mod generative;
pub mod ingest;
pub mod neural;
pub mod normalize;
pub mod smp;
pub mod traffic;

pub use domain::{quantize_payload, LogRecord, ProductionState, TrafficSample};
pub use error::{Error, Result};
pub use normalize::NormalizationSpec;
