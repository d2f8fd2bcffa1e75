//! Reversed-playback probing of video diffusion models.
//!
//! A model that has learned how events unfold should find a clip harder to
//! denoise when it is played backwards. This crate catalogs clips, adapts them
//! to each model's input configuration, scores forward and reversed playback
//! under identical noise, and turns the pairwise outcomes into scores,
//! confidence intervals and rankings.

pub mod frame;
pub mod clipfile;
#[macro_use]
pub mod util;
pub mod catalog;
pub mod preprocess;
pub mod probe;
pub mod judgment;
pub mod metrics;
pub mod partition;
pub mod entropy;
pub mod aggregate;
