//! Forecasting the time until a pedestrian comes within a meter of a moving
//! egocentric camera.
//!
//! The crate covers the whole desk-scale pipeline: pinhole projection of
//! LIDAR returns for range annotation ([`geometry`]), a seeded synthetic scene
//! generator ([`scenesim`]), label and window extraction ([`annotate`]), the
//! analytic predictors ([`baselines`]), a from-scratch multi-stream
//! convolutional regressor ([`neural`]) and the evaluation harness ([`eval`]).

pub mod annotate;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod neural;
pub mod scenesim;

pub use error::{Error, Result};

/// Frames per second of every scene; the labeling arithmetic depends on it.
pub const FRAME_RATE: u32 = 10;
