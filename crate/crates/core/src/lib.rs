//! Explicit perceptual quality metrics for super-resolution: NIQE and the
//! singular-value spatial-discontinuity feature, usable both as scores and as
//! optimizable losses.

pub mod error;
pub mod image_io;
pub mod loss;
pub mod msd;
pub mod niqe;
pub mod nss;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};
pub use image_io::GrayImage;
