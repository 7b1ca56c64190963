//! Preference-classifier guided diffusion on low-dimensional toy data.
//!
//! The crate trains a small noise-prediction diffusion model and a
//! preference classifier, steers reverse sampling toward preferred regions
//! with a classifier-gradient correction plus score-monotone rejection and
//! inversion-based resampling, and carries brute-force oracles that check
//! the underlying tilting identities exactly.

pub mod cli;
pub mod data;
pub mod ddpm;
pub mod error;
pub mod guidance;
pub mod nn;
pub mod oracle;
pub mod prefclassifier;

pub use error::{Error, Result};
