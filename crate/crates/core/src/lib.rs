//! Fog-of-war state estimation for two-player real-time strategy games.
//!
//! Partially observed game frames are encoded as 66-channel unit-count
//! feature maps over a 32x32 grid. A weight-tied convolutional
//! encoder-decoder reconstructs the hidden full state, a small CNN predicts
//! the winner, and two combat-timing policies are benchmarked against a
//! square-law skirmish model.

pub mod dataio;
pub mod error;
pub mod gamestate;
pub mod learning;
pub mod policy;
pub mod nn;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
