//! Motion focal loss laboratory.
//!
//! Procedural sprite videos with exact flow, optical-flow motion heatmaps, a
//! toy latent video diffusion model trained with a heatmap-weighted loss,
//! automatic evaluation, and a pairwise human-preference annotation service.

pub mod annoservice;
pub mod diffusion;
mod error;
pub mod evalkit;
pub mod motionmap;
pub mod numcore;
pub mod synthvid;

pub use error::{Error, Result};
pub use numcore::{Dims4, Tensor4, VideoTensor};
