//! Referential Event Graphs from AMR parses and bottom-up concept-role reasoning over them.
//!
//! The pipeline runs PENMAN text through [`amr`], then [`reg`] (referent selection,
//! re-rooting, acyclization, scheduling), [`features`] (concept/role embeddings
//! with depth encoding), [`summarizer`] (frame and temporal query aggregation),
//! [`tcrr`] (score accumulation) and [`losses`].

pub mod amr;
pub mod bridge;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod features;
pub mod losses;
pub mod numerics;
pub mod pipeline;
pub mod reg;
pub mod summarizer;
pub mod synth;
pub mod tcrr;

pub use error::{Error, ParseError, Result};
