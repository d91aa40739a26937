//! Smarnet: gated lexical embeddings, question-first encoding, multi-hop
//! interactive attention and a two-head answer checker for extractive
//! reading comprehension.

pub mod answer;
pub mod checkpoint;
pub mod data;
pub mod embedding;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod lexical;
pub mod metrics;
pub mod model;
pub mod params;
pub mod tensor;
pub mod training;

#[cfg(test)]
mod testutil;

pub use error::{Result, SmarnetError};
