//! Traffic safety risk from surrogate safety measures (SSMs), evaluated
//! against driver jerk.
//!
//! The pipeline runs from trajectories ([`model`], [`ingest`]) through
//! neighbor classification ([`neighbors`]) and per-pair measures ([`ssm`])
//! to per-ego risk series ([`risk`]) and their statistical evaluation
//! ([`stats`]). [`synth`] builds scenes with known answers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod ingest;
pub mod model;
pub mod neighbors;
pub mod risk;
pub mod ssm;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
