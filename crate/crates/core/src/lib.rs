//! Knowledge-based solver for 4x1 diagrammatic reasoning problems.
//!
//! Pipeline: synthetic problems ([`generator`]) are rendered to rasters
//! ([`raster`]), shapes are detected ([`perception`]), relational features
//! (rotation ρ, counts χ, size labels σ) are extracted ([`features`]), a rule
//! cascade assigns a category and a per-category LSTM ([`seqnet`]) predicts the
//! missing panel, which is matched against the options ([`reasoner`]).
//! [`harness`] persists corpora and runs train/test evaluation.

pub mod error;
pub mod features;
pub mod generator;
pub mod harness;
pub mod model;
pub mod perception;
pub mod raster;
pub mod reasoner;
pub mod seqnet;

pub use error::{Error, Result};
