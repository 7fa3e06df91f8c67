//! Content-based scene cut detection on HSV frame deltas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Frame, RgbImage};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDetectConfig {
    /// Cut when the frame-to-frame score exceeds this value (0..=255).
    pub threshold: f64,
    /// Minimum number of frames in a clip before another cut is allowed.
    pub min_scene_len: usize,
}

impl Default for SceneDetectConfig {
    fn default() -> Self {
        SceneDetectConfig {
            threshold: 27.0,
            min_scene_len: 15,
        }
    }
}

impl SceneDetectConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scene threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.min_scene_len == 0 {
            return Err(Error::InvalidInput("min scene length must be >= 1".into()));
        }
        Ok(())
    }
}

/// A contiguous run of frames `[start, end)` of the input sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneClip {
    pub start: usize,
    pub end: usize,
    /// Frames of the clip, re-indexed from 0.
    pub frames: Vec<Frame>,
}

impl SceneClip {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Per-pixel HSV planes with every channel scaled to `[0, 255]`.
#[derive(Clone, Debug)]
pub struct HsvPlanes {
    dims: (u32, u32),
    hsv: Vec<[f32; 3]>,
}

impl HsvPlanes {
    pub fn from_image(img: &RgbImage) -> Self {
        let hsv = img
            .as_raw()
            .chunks_exact(3)
            .map(|p| rgb_to_hsv([p[0], p[1], p[2]]))
            .collect();
        HsvPlanes { dims: img.dims(), hsv }
    }

    /// Mean over pixels of `(|dH| + |dS| + |dV|) / 3`.
    pub fn delta(&self, other: &HsvPlanes) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                actual: other.dims,
            });
        }
        let sum: f64 = self
            .hsv
            .iter()
            .zip(&other.hsv)
            .map(|(p, q)| ((p[0] - q[0]).abs() + (p[1] - q[1]).abs() + (p[2] - q[2]).abs()) as f64)
            .sum();
        Ok(sum / (3.0 * self.hsv.len() as f64))
    }
}

/// HSV with hue, saturation and value each on a 0..=255 scale.
pub fn rgb_to_hsv(rgb: [u8; 3]) -> [f32; 3] {
    let [r, g, b] = rgb.map(|v| v as f32);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let s = if max > 0.0 { chroma / max * 255.0 } else { 0.0 };
    let h_deg = if chroma == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / chroma + 2.0)
    } else {
        60.0 * ((r - g) / chroma + 4.0)
    };
    [h_deg / 360.0 * 255.0, s, max]
}

/// Frame-to-frame content change score in `[0, 255]`.
pub fn content_score(prev: &Frame, next: &Frame) -> Result<f64> {
    if prev.dims() != next.dims() {
        return Err(Error::DimensionMismatch {
            expected: prev.dims(),
            actual: next.dims(),
        });
    }
    HsvPlanes::from_image(&prev.image).delta(&HsvPlanes::from_image(&next.image))
}

/// Indices `i` such that a cut is placed before frame `i`.
pub fn detect_cuts(frames: &[Frame], cfg: &SceneDetectConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("scene detection needs at least one frame".into()));
    }
    let mut cuts = Vec::new();
    let mut clip_start = 0;
    let mut prev = HsvPlanes::from_image(&frames[0].image);
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let next = HsvPlanes::from_image(&frame.image);
        let score = prev.delta(&next)?;
        if score > cfg.threshold && i - clip_start >= cfg.min_scene_len {
            cuts.push(i);
            clip_start = i;
        }
        prev = next;
    }
    Ok(cuts)
}

/// Splits `frames` into clips that partition the input in order.
pub fn detect_scenes(frames: &[Frame], cfg: &SceneDetectConfig) -> Result<Vec<SceneClip>> {
    let cuts = detect_cuts(frames, cfg)?;
    Ok(split_at_cuts(frames, &cuts))
}

pub fn split_at_cuts(frames: &[Frame], cuts: &[usize]) -> Vec<SceneClip> {
    let bounds: Vec<usize> = std::iter::once(0)
        .chain(cuts.iter().copied())
        .chain(std::iter::once(frames.len()))
        .collect();
    bounds
        .windows(2)
        .map(|w| SceneClip {
            start: w[0],
            end: w[1],
            frames: frames[w[0]..w[1]]
                .iter()
                .enumerate()
                .map(|(i, f)| Frame::new(i, f.image.clone()))
                .collect(),
        })
        .collect()
}
