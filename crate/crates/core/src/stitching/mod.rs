//! Per-scene background stitching.
//!
//! Consecutive frames are registered with keypoint matching and RANSAC,
//! the pairwise maps are chained into frame -> canvas transforms anchored on
//! frame 0, and background pixels are composited first-write-wins.

pub mod canvas;
pub mod keypoints;
pub mod matching;
pub mod ransac;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compose, Affine2D, BilinearTaps, Frame, Mask, TargetSpec};

pub use canvas::{CanvasState, Coverage};
pub use keypoints::{detect_keypoints, detect_keypoints_masked, Descriptor, Keypoint};
pub use matching::{match_descriptors, MatchPair};
pub use ransac::{estimate_affine_ransac, RansacConfig, RansacFit};

use keypoints::Gray;

/// Keypoints kept per frame.
pub const MAX_KEYPOINTS: usize = 500;
/// Foreground masks grow by this many pixels before exclusion.
pub const FOREGROUND_DILATION: u32 = 2;
/// Every this many frames, frame i is also registered directly against frame 0.
pub const REANCHOR_INTERVAL: usize = 30;
/// Translation fallback search radius (px).
pub const NCC_SEARCH_RADIUS: i32 = 32;
/// Minimum correlation accepted from the translation fallback.
pub const NCC_MIN_SCORE: f64 = 0.6;
/// Accepted range of |det| for scene transforms.
pub const DET_RANGE: (f64, f64) = (0.25, 4.0);
/// Canvas area may not exceed this multiple of one expanded frame.
const MAX_CANVAS_FACTOR: usize = 64;

/// How a pairwise transform was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum PairMethod {
    Ransac {
        inliers: usize,
    },
    Translation {
        score: f64,
    },
    /// Both estimators failed; the previous pair's motion was reused.
    Reused,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEstimate {
    /// Maps the later frame's coords into the earlier frame's coords.
    pub transform: Affine2D,
    pub method: PairMethod,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StitchReport {
    /// Entry `i` describes the registration of frame `i + 1` onto frame `i`.
    pub pairs: Vec<PairMethod>,
    /// Frames whose chained transform was replaced by a direct estimate.
    pub reanchored: Vec<usize>,
}

impl StitchReport {
    pub fn fallback_count(&self) -> usize {
        self.pairs
            .iter()
            .filter(|p| !matches!(p, PairMethod::Ransac { .. }))
            .count()
    }
}

fn det_ok(t: &Affine2D) -> bool {
    let d = t.det().abs();
    d >= DET_RANGE.0 && d <= DET_RANGE.1
}

struct FrameFeatures {
    keypoints: Vec<Keypoint>,
    gray: Gray,
}

fn features(frames: &[Frame], masks: Option<&[Mask]>) -> Vec<FrameFeatures> {
    frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let exclude = masks.map(|m| m[i].dilate(FOREGROUND_DILATION));
            FrameFeatures {
                keypoints: detect_keypoints_masked(&f.image, MAX_KEYPOINTS, exclude.as_ref()),
                gray: Gray::from_rgb(&f.image),
            }
        })
        .collect()
}

/// RANSAC registration of `src` onto `dst` (maps src coords to dst coords).
fn register(src: &[Keypoint], dst: &[Keypoint], cfg: &RansacConfig, seed: u64) -> Option<RansacFit> {
    if src.is_empty() || dst.is_empty() {
        return None;
    }
    let matches = match_descriptors(src, dst, cfg.ratio_test);
    let s: Vec<_> = matches.iter().map(|m| (src[m.src_idx].x, src[m.src_idx].y)).collect();
    let d: Vec<_> = matches.iter().map(|m| (dst[m.dst_idx].x, dst[m.dst_idx].y)).collect();
    let fit = estimate_affine_ransac(&s, &d, &cfg.with_seed(cfg.seed ^ seed)).ok()?;
    det_ok(&fit.transform).then_some(fit)
}

fn ncc_at(src: &Gray, dst: &Gray, dx: i32, dy: i32, min_overlap: usize) -> Option<f64> {
    let (w, h) = (src.width as i32, src.height as i32);
    let x0 = 0.max(-dx);
    let x1 = w.min(w - dx);
    let y0 = 0.max(-dy);
    let y1 = h.min(h - dy);
    if x1 <= x0 || y1 <= y0 || (((x1 - x0) * (y1 - y0)) as usize) < min_overlap {
        return None;
    }
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0f64, 0f64, 0f64, 0f64, 0f64);
    for y in y0..y1 {
        for x in x0..x1 {
            let a = src.at(x as usize, y as usize) as f64;
            let b = dst.at((x + dx) as usize, (y + dy) as usize) as f64;
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va <= 1e-6 * n || vb <= 1e-6 * n {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

/// Integer translation `(dx, dy)` maximizing normalized cross-correlation
/// between `src(x, y)` and `dst(x + dx, y + dy)` over `+-radius`.
pub fn estimate_translation_ncc(src: &Gray, dst: &Gray, radius: i32) -> Option<((i32, i32), f64)> {
    const FACTOR: usize = 4;
    let search = |a: &Gray, b: &Gray, center: (i32, i32), r: i32| {
        let min_overlap = a.width * a.height / 4;
        let mut best: Option<((i32, i32), f64)> = None;
        for dy in center.1 - r..=center.1 + r {
            for dx in center.0 - r..=center.0 + r {
                if let Some(s) = ncc_at(a, b, dx, dy, min_overlap) {
                    // Near-ties go to the smaller shift.
                    let better = best.is_none_or(|((bx, by), bs)| {
                        s > bs + 1e-9 || (s >= bs - 1e-9 && dx * dx + dy * dy < bx * bx + by * by)
                    });
                    if better {
                        best = Some(((dx, dy), s));
                    }
                }
            }
        }
        best
    };
    let coarse = if src.width >= 16 * FACTOR && src.height >= 16 * FACTOR {
        let (a, b) = (src.downsample(FACTOR), dst.downsample(FACTOR));
        let ((cx, cy), _) = search(&a, &b, (0, 0), radius / FACTOR as i32)?;
        (cx * FACTOR as i32, cy * FACTOR as i32)
    } else {
        let (c, _) = search(src, dst, (0, 0), radius)?;
        c
    };
    let ((dx, dy), score) = search(src, dst, coarse, FACTOR as i32 - 1)?;
    (dx.abs() <= radius && dy.abs() <= radius).then_some(((dx, dy), score))
}

fn estimate_pair(
    cur: &FrameFeatures,
    prev: &FrameFeatures,
    previous: Option<&PairEstimate>,
    cfg: &RansacConfig,
    seed: u64,
) -> PairEstimate {
    if let Some(fit) = register(&cur.keypoints, &prev.keypoints, cfg, seed) {
        return PairEstimate {
            transform: fit.transform,
            method: PairMethod::Ransac {
                inliers: fit.inlier_count(),
            },
        };
    }
    if let Some(((dx, dy), score)) = estimate_translation_ncc(&cur.gray, &prev.gray, NCC_SEARCH_RADIUS) {
        if score >= NCC_MIN_SCORE {
            return PairEstimate {
                transform: Affine2D::translation(dx as f64, dy as f64),
                method: PairMethod::Translation { score },
            };
        }
    }
    PairEstimate {
        transform: previous.map_or(Affine2D::IDENTITY, |p| p.transform),
        method: PairMethod::Reused,
    }
}

/// Chained frame -> frame-0 transforms for a scene.
fn chain_transforms(feats: &[FrameFeatures], cfg: &RansacConfig) -> (Vec<Affine2D>, StitchReport) {
    let mut report = StitchReport::default();
    let mut relative = vec![Affine2D::IDENTITY];
    let mut last: Option<PairEstimate> = None;
    for i in 1..feats.len() {
        let est = estimate_pair(&feats[i], &feats[i - 1], last.as_ref(), cfg, i as u64);
        let mut to_first = compose(&est.transform, &relative[i - 1]);
        if i % REANCHOR_INTERVAL == 0 {
            let chained_inliers = match est.method {
                PairMethod::Ransac { inliers } => inliers,
                _ => 0,
            };
            if let Some(direct) = register(&feats[i].keypoints, &feats[0].keypoints, cfg, (i as u64) << 32) {
                if direct.inlier_count() >= chained_inliers {
                    to_first = direct.transform;
                    report.reanchored.push(i);
                }
            }
        }
        report.pairs.push(est.method);
        relative.push(to_first);
        last = Some(est);
    }
    (relative, report)
}

/// Integer per-frame offsets relative to frame 0, used to align frames for
/// the median background model.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseAlignment {
    /// Frame `i` pixel `(x, y)` corresponds to frame 0 pixel `(x + dx, y + dy)`.
    pub offsets: Vec<(i32, i32)>,
    /// Some frame moved by more than a translation (rotation/scale).
    pub non_translational: bool,
}

/// Translation-only first pass over a scene (no foreground masks).
pub fn coarse_alignment(frames: &[Frame], cfg: &RansacConfig) -> CoarseAlignment {
    let feats = features(frames, None);
    let (relative, _) = chain_transforms(&feats, cfg);
    CoarseAlignment {
        offsets: relative
            .iter()
            .map(|t| (t.tx.round() as i32, t.ty.round() as i32))
            .collect(),
        non_translational: relative.iter().any(|t| !t.is_translation(0.02)),
    }
}

fn validate_inputs(frames: &[Frame], masks: &[Mask]) -> Result<(u32, u32)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot stitch an empty scene".into()))?;
    if masks.len() != frames.len() {
        return Err(Error::InvalidInput(format!(
            "{} masks for {} frames",
            masks.len(),
            frames.len()
        )));
    }
    let dims = first.dims();
    for (f, m) in frames.iter().zip(masks) {
        if f.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: f.dims(),
            });
        }
        m.check_dims(dims)?;
    }
    Ok(dims)
}

/// Builds the canvas geometry for `relative` (frame -> frame-0) transforms.
pub fn layout_canvas(relative: &[Affine2D], frame_dims: (u32, u32), target: TargetSpec) -> Result<CanvasState> {
    let (fw, fh) = frame_dims;
    let (tw, th) = target.dimensions(fw, fh)?;
    let margins = target.margins(fw, fh)?;
    let to_output = Affine2D::translation(-(margins.left as f64), 0.0);
    let mut ext = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for t in relative {
        let e = canvas::transformed_extent(&compose(&to_output, t), tw, th);
        ext = (ext.0.min(e.0), ext.1.min(e.1), ext.2.max(e.2), ext.3.max(e.3));
    }
    let width = (ext.2 as i64 - ext.0 as i64 + 1) as usize;
    let height = (ext.3 as i64 - ext.1 as i64 + 1) as usize;
    if width * height > MAX_CANVAS_FACTOR * tw as usize * th as usize {
        return Err(Error::StitchFailure(format!(
            "canvas {width}x{height} is implausibly large for {tw}x{th} frames"
        )));
    }
    let origin = (-ext.0, -ext.1);
    let place = Affine2D::translation(origin.0 as f64, origin.1 as f64);
    let transforms = relative.iter().map(|t| compose(t, &place)).collect();
    Ok(CanvasState::new(
        width as u32,
        height as u32,
        origin,
        transforms,
        frame_dims,
        (tw, th),
        margins,
    ))
}

/// Composites background pixels of every frame into `canvas`, in frame order,
/// writing only cells that are still unknown.
pub fn composite_frames(canvas: &mut CanvasState, frames: &[Frame], fg_masks: &[Mask]) -> Result<usize> {
    let mut written = 0;
    for (i, frame) in frames.iter().enumerate() {
        let t = canvas.frame_transforms[i];
        let inv = t.inverse()?;
        let exclude = fg_masks[i].dilate(FOREGROUND_DILATION);
        let (fw, fh) = frame.dims();
        let Some(rect) = canvas::transformed_bbox(&t, fw, fh).intersect(&canvas.bounds()) else {
            continue;
        };
        for cy in rect.y0..rect.y1() {
            for cx in rect.x0..rect.x1() {
                let (cx, cy) = (cx as u32, cy as u32);
                if canvas.coverage(cx, cy) != Coverage::Unknown {
                    continue;
                }
                let (x, y) = inv.apply(cx as f64, cy as f64);
                let Some(taps) = BilinearTaps::at(x, y, fw, fh) else {
                    continue;
                };
                let mut foreground = false;
                taps.for_each(|px, py, _| foreground |= exclude.is_set(px, py));
                if foreground {
                    continue;
                }
                if canvas.write_original(cx, cy, taps.sample(&frame.image)) {
                    written += 1;
                }
            }
        }
    }
    Ok(written)
}

/// Stitches a scene into a canvas, also returning how each pair was registered.
pub fn stitch_scene_with_report(
    frames: &[Frame],
    fg_masks: &[Mask],
    target: TargetSpec,
    cfg: &RansacConfig,
) -> Result<(CanvasState, StitchReport)> {
    cfg.validate()?;
    let dims = validate_inputs(frames, fg_masks)?;
    let feats = features(frames, Some(fg_masks));
    let (relative, report) = chain_transforms(&feats, cfg);
    let mut canvas = layout_canvas(&relative, dims, target)?;
    let written = composite_frames(&mut canvas, frames, fg_masks)?;
    if written == 0 {
        return Err(Error::StitchFailure("no background pixel in any frame".into()));
    }
    Ok((canvas, report))
}

/// Stitches a scene's background into a panoramic canvas.
pub fn stitch_scene(
    frames: &[Frame],
    fg_masks: &[Mask],
    target: TargetSpec,
    cfg: &RansacConfig,
) -> Result<CanvasState> {
    stitch_scene_with_report(frames, fg_masks, target, cfg).map(|(c, _)| c)
}
