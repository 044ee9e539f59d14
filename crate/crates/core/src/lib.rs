//! Corpus dialectometry over regional message collections.
//!
//! The crate covers the measurable part of a regional-variation study:
//! streaming and filtering geotagged messages, normalization and
//! tokenization with emoji handling, per-region vocabularies with a
//! confidence-interval frequency cutoff, Heaps/Zipf exponent fits,
//! lexical and embedding-based region affinity matrices, emoji usage
//! rankings, and the Emoji-15 classification benchmark harness.

pub mod affinity;
pub mod embcompare;
pub mod emoji15;
mod error;
pub mod ingest;
pub mod region;
pub mod textnorm;
pub mod vocab;

pub use error::{Error, Result};
pub use region::RegionCode;
