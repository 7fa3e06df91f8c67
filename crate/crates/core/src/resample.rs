//! Rendering expanded output frames from a completed canvas.

use crate::error::{Error, Result};
use crate::model::{BilinearTaps, Frame, PixelRect, RgbImage};
use crate::stitching::{CanvasState, Coverage};

#[derive(Clone, Debug, PartialEq)]
pub struct OutputFrame {
    pub index: usize,
    pub image: RgbImage,
    /// Where the untouched source frame sits in `image`.
    pub source_rect: PixelRect,
}

impl OutputFrame {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

/// Number of unknown canvas cells frame `frame_idx`'s output would read.
pub fn missing_support(canvas: &CanvasState, frame_idx: usize) -> usize {
    let mut missing = 0;
    canvas.for_each_support_cell(frame_idx, |x, y| {
        if canvas.coverage(x, y) == Coverage::Unknown {
            missing += 1;
        }
    });
    missing
}

/// Samples frame `frame_idx`'s expanded rect from the canvas and pastes the
/// source frame over its center, so source pixels are reproduced exactly.
pub fn resample_frame(canvas: &CanvasState, frame_idx: usize, source: &Frame) -> Result<OutputFrame> {
    if frame_idx >= canvas.frame_count() {
        return Err(Error::InvalidInput(format!(
            "frame {frame_idx} has no transform (scene has {})",
            canvas.frame_count()
        )));
    }
    if source.dims() != canvas.frame_dims {
        return Err(Error::DimensionMismatch {
            expected: canvas.frame_dims,
            actual: source.dims(),
        });
    }
    let missing = missing_support(canvas, frame_idx);
    if missing > 0 {
        return Err(Error::IncompleteCanvas(missing));
    }
    let t = canvas.output_transform(frame_idx);
    let (tw, th) = canvas.target_dims;
    let (cw, ch) = canvas.dims();
    let bg = canvas.background();
    let mut image = RgbImage::from_fn(tw, th, |u, v| {
        let (x, y) = t.apply(u as f64, v as f64);
        BilinearTaps::clamped(x, y, cw, ch).sample(bg)
    });
    let left = canvas.margins.left;
    let (fw, fh) = source.dims();
    for y in 0..fh {
        for x in 0..fw {
            image.put(x + left, y, source.image.get(x, y));
        }
    }
    Ok(OutputFrame {
        index: source.index,
        image,
        source_rect: PixelRect::new(left as i32, 0, fw, fh),
    })
}

/// Resamples every frame of a scene.
pub fn reconstruct_scene(canvas: &CanvasState, frames: &[Frame]) -> Result<Vec<OutputFrame>> {
    if frames.len() != canvas.frame_count() {
        return Err(Error::InvalidInput(format!(
            "{} frames for a canvas of {}",
            frames.len(),
            canvas.frame_count()
        )));
    }
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| resample_frame(canvas, i, f))
        .collect()
}

/// Centers `frame` in a target-sized raster with black margins.
pub fn pillarbox(frame: &Frame, target_dims: (u32, u32)) -> OutputFrame {
    let (tw, th) = target_dims;
    let left = (tw - frame.width()) / 2;
    let mut image = RgbImage::new(tw, th);
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            image.put(x + left, y, frame.image.get(x, y));
        }
    }
    OutputFrame {
        index: frame.index,
        image,
        source_rect: PixelRect::new(left as i32, 0, frame.width(), frame.height()),
    }
}
