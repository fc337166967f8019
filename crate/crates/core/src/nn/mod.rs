//! Network building blocks for the noise predictor.

pub mod controls;
pub mod layers;
pub mod mtr;
pub mod params;
pub mod scg;
pub mod time_embed;
pub mod unet;

pub use params::{Bound, Param, ParamStore};
pub use unet::{NetConfig, SpatialKind, TemporalKind, UNet, Variant};
