//! Spatio-temporal controlled diffusion for EEG-to-fNIRS cross-modal
//! generation: preprocessing, correlation grids, the SCG/MTR U-Net,
//! shared-noise diffusion with Wasserstein schedule search, training,
//! sampling, and evaluation.

pub mod container;
pub mod corr;
pub mod diffusion;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod layout;
pub mod nn;
pub mod rng;
pub mod series;
pub mod synth;
pub mod tape;
pub mod trainer;

pub use error::{Result, ScdmError};
