//! Layer-wise probing of lexical semantics in transformer hidden states on
//! the Word-in-Context task.
//!
//! The pipeline: parse a WiC split ([`corpus`]), build a probe text per
//! setting ([`transforms`]), run a model and pool the target's token states
//! per layer ([`align`], [`toy_model`], [`extract`]), persist them
//! ([`store`]), then compare the two contexts by cosine after per-layer
//! standardization ([`geometry`]) and threshold the similarity with a
//! dev-calibrated cutoff per layer ([`eval`]).

pub mod align;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod extract;
pub mod geometry;
pub mod report;
pub mod store;
pub mod toy_model;
pub mod transforms;

pub use error::{Error, Result};
