//! latefuse: a late-fusion toolkit for 3-class sentiment analysis.
//!
//! Per-modality classifiers (image and text) each emit a probability vector
//! over {negative, neutral, positive}. This crate joins those vectors into
//! six-dimensional fused features, then runs a seeded random search over a
//! classical model zoo (trees, forests, GLMs, two gradient-boosting
//! variants, small MLPs) plus two stacked ensembles, selecting the fusion
//! classifier with the best validation accuracy.
//!
//! It also ships the deterministic preprocessing used to produce modality
//! inputs at small scale: the six-step tweet cleaning pipeline with a
//! lexicon-average classifier, and image preparation (bilinear resize,
//! per-channel dataset normalization, local binary patterns).
//!
//! See the `examples/` directory for one runnable walkthrough per
//! capability, and the `latefuse` binary for the batch interface.

pub mod automl;
pub mod cli;
pub mod core;
pub mod error;
pub mod fusion;
pub mod imageprep;
pub mod models;
pub mod rng;
pub mod textprep;

pub use error::{Error, Result};
