//! Dataset search over tabular corpora with generated schema labels.
//!
//! Two stages: a schema label generator trained on label co-occurrence
//! (matrix factorization plus a random forest), then a mixed ranker that
//! combines BM25 over dataset text with embedding distance to the generated
//! labels.

pub mod cofactor;
pub mod config;
pub mod cooccur;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod index;
pub mod labelgen;
pub mod pipeline;
pub mod ranking;
pub mod synthetic;

pub use error::{Error, Result};
