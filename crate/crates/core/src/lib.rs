//! Memory-based classification and U(1) symmetry analysis over per-pixel CNN
//! activation vectors.
//!
//! The crate is organised bottom-up:
//!
//! - [`activation`], [`amf`], [`manifest`]: the activation tensor model, its
//!   binary file format and the labeled file manifest.
//! - [`ann`]: random projection forest for approximate K-NN, with a full-scan
//!   reference.
//! - [`classifier`]: kernel-density class likelihood over pixel-vector
//!   matches with adaptive bandwidth, and an evaluation harness.
//! - [`symmetry`]: energy profiles, match-location statistics and circular
//!   statistics of the angular bias.
//! - [`trainer`]: a small dense network trained with cross-entropy plus an
//!   L2 loss against per-class points on the unit circle.
//! - [`synth`]: deterministic synthetic activation maps used by tests and the CLI.
//! - [`report`]: PGM heatmaps and bundling of run artifacts.

pub mod activation;
pub mod amf;
pub mod ann;
pub mod classifier;
pub mod error;
pub mod manifest;
pub mod report;
pub mod symmetry;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
