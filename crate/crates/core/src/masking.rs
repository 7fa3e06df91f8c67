//! Foreground masks, so that only background pixels reach the canvas.
//!
//! Two maskers share the [`Masker`] interface: a classical temporal-median
//! background subtractor and an HTTP client for a learned segmentation
//! service. [`FallbackMasker`] chains them.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::model::{Frame, Mask, RgbImage};
use crate::remote::{ClientConfig, JsonClient};
use crate::stitching::{coarse_alignment, CoarseAlignment, RansacConfig};

pub const DEFAULT_DELTA_THRESHOLD: u8 = 25;
pub const DEFAULT_MASK_TIMEOUT: Duration = Duration::from_secs(30);
/// Remote grayscale masks are binarized at this level.
pub const REMOTE_BINARIZE_THRESHOLD: u8 = 128;

/// Scene-level information a masker may use.
pub struct SceneContext<'a> {
    pub frames: &'a [Frame],
    pub alignment: &'a CoarseAlignment,
}

pub trait Masker: Send + Sync {
    /// Foreground mask for `frame`, which belongs to `scene`.
    fn mask(&self, frame: &Frame, scene: &SceneContext<'_>) -> Result<Mask>;

    fn name(&self) -> &'static str;
}

/// Masks every frame of a scene, checking the module-boundary contract.
pub fn mask_scene(masker: &dyn Masker, frames: &[Frame], alignment: &CoarseAlignment) -> Result<Vec<Mask>> {
    let ctx = SceneContext { frames, alignment };
    frames
        .iter()
        .map(|f| {
            let m = masker.mask(f, &ctx)?;
            m.check_dims(f.dims())?;
            if !m.is_binary() {
                return Err(Error::InvariantViolation(format!(
                    "{} returned a non-binary mask",
                    masker.name()
                )));
            }
            Ok(m)
        })
        .collect()
}

/// All-background masks for `frames`.
pub fn empty_masks(frames: &[Frame]) -> Vec<Mask> {
    frames.iter().map(|f| Mask::new(f.width(), f.height())).collect()
}

/// Per-pixel union of `masks`; an empty list yields an all-zero mask of `dims`.
pub fn merge_masks(masks: &[Mask], dims: (u32, u32)) -> Result<Mask> {
    let mut out = vec![0u8; dims.0 as usize * dims.1 as usize];
    for m in masks {
        m.check_dims(dims)?;
        for (o, &v) in out.iter_mut().zip(m.as_raw()) {
            *o |= v;
        }
    }
    Mask::from_raw(dims.0, dims.1, out)
}

/// 3x3 opening followed by 3x3 closing.
fn clean(mask: &Mask) -> Mask {
    let opened = mask.erode(1).dilate(1);
    opened.dilate(1).erode(1)
}

#[inline]
fn max_channel_delta(p: [u8; 3], q: [u8; 3]) -> u8 {
    (0..3).map(|k| p[k].abs_diff(q[k])).max().unwrap_or(0)
}

/// Temporal median of a scene's frames after coarse translation alignment.
#[derive(Clone, Debug)]
pub struct MedianBackgroundModel {
    /// Median raster covering the union of all aligned frames.
    pub aligned_median: RgbImage,
    /// Position of frame 0's top-left pixel in `aligned_median`.
    pub origin: (i32, i32),
    /// Per-frame offsets relative to frame 0.
    pub offsets: Vec<(i32, i32)>,
    pub delta_threshold: u8,
}

impl MedianBackgroundModel {
    pub fn build(frames: &[Frame], offsets: &[(i32, i32)], delta_threshold: u8) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidInput("median model needs at least one frame".into()))?;
        if offsets.len() != frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} offsets for {} frames",
                offsets.len(),
                frames.len()
            )));
        }
        let (w, h) = first.dims();
        if let Some(f) = frames.iter().find(|f| f.dims() != (w, h)) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: f.dims(),
            });
        }
        let min_x = offsets.iter().map(|o| o.0).min().unwrap_or(0);
        let min_y = offsets.iter().map(|o| o.1).min().unwrap_or(0);
        let max_x = offsets.iter().map(|o| o.0).max().unwrap_or(0);
        let max_y = offsets.iter().map(|o| o.1).max().unwrap_or(0);
        let mw = (max_x - min_x) as u32 + w;
        let mh = (max_y - min_y) as u32 + h;
        let origin = (-min_x, -min_y);

        let mut median = RgbImage::new(mw, mh);
        let mut samples: [Vec<u8>; 3] = Default::default();
        for my in 0..mh as i32 {
            for mx in 0..mw as i32 {
                for s in samples.iter_mut() {
                    s.clear();
                }
                for (f, &(dx, dy)) in frames.iter().zip(offsets) {
                    let x = mx - origin.0 - dx;
                    let y = my - origin.1 - dy;
                    if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                        let p = f.image.get(x as u32, y as u32);
                        for k in 0..3 {
                            samples[k].push(p[k]);
                        }
                    }
                }
                if samples[0].is_empty() {
                    continue;
                }
                let mut px = [0u8; 3];
                for k in 0..3 {
                    let s = &mut samples[k];
                    let mid = (s.len() - 1) / 2;
                    px[k] = *s.select_nth_unstable(mid).1;
                }
                median.put(mx as u32, my as u32, px);
            }
        }
        Ok(MedianBackgroundModel {
            aligned_median: median,
            origin,
            offsets: offsets.to_vec(),
            delta_threshold,
        })
    }

    /// Median value under pixel `(x, y)` of frame `index`.
    fn median_at(&self, index: usize, x: u32, y: u32) -> Option<[u8; 3]> {
        let (dx, dy) = *self.offsets.get(index)?;
        let mx = x as i32 + dx + self.origin.0;
        let my = y as i32 + dy + self.origin.1;
        (mx >= 0 && my >= 0 && (mx as u32) < self.aligned_median.width() && (my as u32) < self.aligned_median.height())
            .then(|| self.aligned_median.get(mx as u32, my as u32))
    }
}

/// Foreground where the frame departs from the scene median by more than the
/// model's threshold, cleaned with a 3x3 open then close.
pub fn classical_mask(frame: &Frame, model: &MedianBackgroundModel) -> Result<Mask> {
    if frame.index >= model.offsets.len() {
        return Err(Error::InvalidInput(format!(
            "frame {} is not part of the median model's scene",
            frame.index
        )));
    }
    let (w, h) = frame.dims();
    let (dx, dy) = model.offsets[frame.index];
    let mx = dx + model.origin.0;
    let my = dy + model.origin.1;
    if mx < 0 || my < 0 || mx as u32 + w > model.aligned_median.width() || my as u32 + h > model.aligned_median.height()
    {
        return Err(Error::DimensionMismatch {
            expected: model.aligned_median.dims(),
            actual: frame.dims(),
        });
    }
    let raw = Mask::from_fn(w, h, |x, y| {
        let m = model.median_at(frame.index, x, y).expect("bounds checked");
        max_channel_delta(frame.image.get(x, y), m) > model.delta_threshold
    });
    Ok(clean(&raw))
}

/// Differencing against a neighbouring frame, for scenes whose motion is not
/// a translation (frame 0 is compared with frame 1).
pub fn frame_difference_mask(frames: &[Frame], index: usize, delta_threshold: u8) -> Result<Mask> {
    let frame = frames
        .get(index)
        .ok_or_else(|| Error::InvalidInput(format!("frame {index} out of range")))?;
    let Some(other) = (if index > 0 {
        frames.get(index - 1)
    } else {
        frames.get(1)
    }) else {
        return Ok(Mask::new(frame.width(), frame.height()));
    };
    if other.dims() != frame.dims() {
        return Err(Error::DimensionMismatch {
            expected: frame.dims(),
            actual: other.dims(),
        });
    }
    let raw = Mask::from_fn(frame.width(), frame.height(), |x, y| {
        max_channel_delta(frame.image.get(x, y), other.image.get(x, y)) > delta_threshold
    });
    Ok(clean(&raw))
}

enum ClassicalModel {
    Median(MedianBackgroundModel),
    Difference,
}

/// Classical background subtraction for one scene.
pub struct ClassicalMasker {
    model: ClassicalModel,
    delta_threshold: u8,
}

impl ClassicalMasker {
    pub fn for_scene(frames: &[Frame], alignment: &CoarseAlignment, delta_threshold: u8) -> Result<Self> {
        let model = if alignment.non_translational {
            ClassicalModel::Difference
        } else {
            ClassicalModel::Median(MedianBackgroundModel::build(
                frames,
                &alignment.offsets,
                delta_threshold,
            )?)
        };
        Ok(ClassicalMasker { model, delta_threshold })
    }

    /// Runs the coarse alignment pass itself.
    pub fn from_frames(frames: &[Frame], delta_threshold: u8) -> Result<Self> {
        Self::for_scene(
            frames,
            &coarse_alignment(frames, &RansacConfig::default()),
            delta_threshold,
        )
    }

    pub fn median_model(&self) -> Option<&MedianBackgroundModel> {
        match &self.model {
            ClassicalModel::Median(m) => Some(m),
            ClassicalModel::Difference => None,
        }
    }
}

impl Masker for ClassicalMasker {
    fn mask(&self, frame: &Frame, scene: &SceneContext<'_>) -> Result<Mask> {
        match &self.model {
            ClassicalModel::Median(m) => classical_mask(frame, m),
            ClassicalModel::Difference => frame_difference_mask(scene.frames, frame.index, self.delta_threshold),
        }
    }

    fn name(&self) -> &'static str {
        "classical"
    }
}

#[derive(Serialize, Deserialize)]
pub struct MaskRequest {
    pub image_png_b64: String,
}

#[derive(Serialize, Deserialize)]
pub struct MaskResponse {
    pub mask_png_b64: String,
}

/// Client for `POST {endpoint}/mask`.
#[derive(Clone)]
pub struct RemoteMasker {
    client: JsonClient,
}

impl RemoteMasker {
    pub fn new(cfg: ClientConfig) -> Self {
        RemoteMasker {
            client: JsonClient::new(cfg),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.client.config().endpoint
    }
}

/// Requests a mask from the sidecar; the reply is binarized at 128 and
/// must match the frame's dimensions.
pub fn remote_mask(frame: &Frame, client: &RemoteMasker) -> Result<Mask> {
    let png = codec::encode_rgb_png(&frame.image)?;
    let req = MaskRequest {
        image_png_b64: codec::to_base64(&png),
    };
    let resp: MaskResponse = client.client.post("mask", &req).map_err(Error::RemoteMasker)?;
    let bytes = codec::from_base64(&resp.mask_png_b64).map_err(|e| Error::RemoteMasker(e.to_string()))?;
    let (w, h, gray) = codec::decode_gray_png(&bytes).map_err(|e| Error::RemoteMasker(e.to_string()))?;
    if (w, h) != frame.dims() {
        return Err(Error::RemoteMasker(format!(
            "mask is {w}x{h}, frame is {}x{}",
            frame.width(),
            frame.height()
        )));
    }
    Mask::binarize(w, h, &gray, REMOTE_BINARIZE_THRESHOLD)
}

impl Masker for RemoteMasker {
    fn mask(&self, frame: &Frame, _scene: &SceneContext<'_>) -> Result<Mask> {
        remote_mask(frame, self)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

/// Uses `primary`, switching to `fallback` for any frame where it fails.
pub struct FallbackMasker<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Masker, F: Masker> Masker for FallbackMasker<P, F> {
    fn mask(&self, frame: &Frame, scene: &SceneContext<'_>) -> Result<Mask> {
        self.primary.mask(frame, scene).or_else(|e| {
            log::warn!(
                "{} masker failed on frame {}: {e}; using {}",
                self.primary.name(),
                frame.index,
                self.fallback.name()
            );
            self.fallback.mask(frame, scene)
        })
    }

    fn name(&self) -> &'static str {
        "fallback"
    }
}
