//! Aspect-ratio expansion for animated video.
//!
//! Each scene's background is stitched into a panoramic canvas from the
//! frames themselves; only canvas cells that no frame ever shows are
//! generated, and every output frame carries its source pixels unchanged.

pub mod codec;
pub mod error;
pub mod masking;
pub mod model;
pub mod outpainting;
pub mod pipeline;
pub mod remote;
pub mod resample;
pub mod scenedetect;
pub mod stitching;
pub mod synthgen;

pub use error::{Error, Result};
pub use model::{
    compose, invert, sample_bilinear, target_dimensions, Affine2D, Frame, Margins, Mask, PixelRect, Rgb, RgbImage,
    TargetSpec,
};
