//! Environment-semantics-aided mmWave beam prediction.
//!
//! The crate covers the full pipeline: a geometric ULA channel model that
//! labels each scene with its SNR-optimal codebook beam, a synthetic roadway
//! scene generator with a pinhole camera, conversion of detections into
//! compact semantic inputs (bounding boxes, downsampled masks, positions), a
//! small double-precision neural network substrate, the predictor
//! architectures, and an experiment harness reporting top-k accuracy against
//! parameter count.

pub mod array_channel;
pub mod error;
pub mod grid;
pub mod harness;
pub mod nn;
pub mod predictors;
pub mod scene_sim;
pub mod seed;
pub mod semantics;

pub use error::{Error, Result};
