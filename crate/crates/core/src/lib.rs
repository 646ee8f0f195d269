//! Gender signaling vs. gender performance on product-review helpfulness.
//!
//! The crate is organised as a batch pipeline:
//!
//! * [`corpus`] parses review / product JSON lines into an append-only store.
//! * [`signal`] reads a likely gender off the first token of a user name.
//! * [`perform`] trains a character-level CNN on signaled reviews and labels
//!   the remaining reviewers by majority vote.
//! * [`features`] computes the matching confounders.
//! * [`matching`] pairs reviews across groups by Mahalanobis distance.
//! * [`effects`] turns matched pairs into bootstrapped helpfulness advantages.
//! * [`synth`] generates corpora with planted effects for end-to-end checks.
//! * [`pipeline`] wires the stages together behind the `genderlens` binary.

pub mod corpus;
pub mod effects;
pub mod error;
pub mod features;
pub mod matching;
pub mod perform;
pub mod pipeline;
pub mod seeding;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
