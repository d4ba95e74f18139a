//! Trainable audio front end with relevance weighting.
//!
//! The pipeline turns raw 16 kHz waveforms into class posteriors through a
//! parametric acoustic filterbank, per-filter relevance weighting, instance
//! normalization, center-frame pruning, a 2-D modulation filter layer with its
//! own relevance weighting, batch normalization, and a small convolutional
//! classifier head. Every stage has a hand-coded reverse-mode gradient so the
//! whole front end trains end to end.

pub mod checkpoint;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod filterbank;
pub mod model;
pub mod modulation;
pub mod norm;
pub mod optim;
pub mod relevance;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod util;

pub use error::{Error, Result};
