//! Selection and single-pass generation of canvas cells no frame observed.
//!
//! For each frame in order, the unknown cells its expanded rect needs are
//! selected, sent to an [`Outpainter`] together with surrounding context,
//! and committed as `Generated`. Committed cells are never selected again.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::codec;
use crate::error::{Error, Result};
use crate::model::{quantize, Mask, PixelRect, RgbImage, TargetSpec};
use crate::remote::{ClientConfig, JsonClient};
use crate::stitching::{CanvasState, Coverage};

pub const DEFAULT_PROMPT: &str = "animated background";
/// Known pixels included around the expanded rect in each request.
pub const CONTEXT_MARGIN: u32 = 64;
pub const DEFAULT_OUTPAINT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Clone, Debug)]
pub struct OutpaintRequest {
    pub patch: RgbImage,
    /// 255 marks pixels to generate.
    pub mask: Mask,
    pub prompt: String,
    /// Where `patch` sits on the canvas.
    pub rect: PixelRect,
}

impl OutpaintRequest {
    pub fn validate(&self) -> Result<()> {
        self.mask.check_dims(self.patch.dims())?;
        if self.mask.is_empty() {
            return Err(Error::InvalidInput("outpaint request selects no pixels".into()));
        }
        Ok(())
    }
}

pub trait Outpainter: Send + Sync {
    /// Returns a raster of the patch's dimensions with masked pixels filled.
    fn outpaint(&self, request: &OutpaintRequest) -> Result<RgbImage>;

    fn name(&self) -> &'static str;
}

/// Unknown canvas cells needed to render one frame's expanded rect.
#[derive(Clone, Debug, PartialEq)]
pub struct OutpaintRegion {
    /// Canvas bounding box of the frame's expanded rect.
    pub rect: PixelRect,
    /// Selected cells, in `rect` coordinates.
    pub mask: Mask,
}

impl OutpaintRegion {
    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// Marks exactly the unknown cells that resampling frame `frame_idx` at the
/// target size will read.
pub fn select_outpaint_region(canvas: &CanvasState, frame_idx: usize, target: TargetSpec) -> Result<OutpaintRegion> {
    if frame_idx >= canvas.frame_count() {
        return Err(Error::InvalidInput(format!(
            "frame {frame_idx} has no transform (scene has {})",
            canvas.frame_count()
        )));
    }
    let (fw, fh) = canvas.frame_dims;
    if target.dimensions(fw, fh)? != canvas.target_dims {
        return Err(Error::InvalidInput(format!(
            "target {target} does not match the canvas layout {:?}",
            canvas.target_dims
        )));
    }
    let rect = canvas.expanded_rect(frame_idx);
    let mut mask = Mask::new(rect.width, rect.height);
    canvas.for_each_support_cell(frame_idx, |x, y| {
        if canvas.coverage(x, y) == Coverage::Unknown {
            mask.set((x as i32 - rect.x0) as u32, (y as i32 - rect.y0) as u32, true);
        }
    });
    Ok(OutpaintRegion { rect, mask })
}

/// 8-neighbour boundary propagation over `unknown` pixels, in place.
///
/// Each pass assigns every unknown pixel that touches a known one the rounded
/// mean of its known neighbours; all assignments in a pass read the previous
/// pass's state. Returns false when there is no known seed.
fn propagate(img: &mut RgbImage, unknown: &mut [bool]) -> bool {
    let (w, h) = (img.width() as i32, img.height() as i32);
    let mut remaining = unknown.iter().filter(|&&u| u).count();
    if remaining == 0 {
        return true;
    }
    if remaining == unknown.len() {
        return false;
    }
    let mut updates: Vec<(u32, u32, [u8; 3])> = Vec::new();
    while remaining > 0 {
        updates.clear();
        for y in 0..h {
            for x in 0..w {
                if !unknown[(y * w + x) as usize] {
                    continue;
                }
                let mut sum = [0u32; 3];
                let mut n = 0u32;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        if unknown[(ny * w + nx) as usize] {
                            continue;
                        }
                        let p = img.get(nx as u32, ny as u32);
                        for k in 0..3 {
                            sum[k] += p[k] as u32;
                        }
                        n += 1;
                    }
                }
                if n > 0 {
                    let mean = sum.map(|s| quantize(s as f64 / n as f64));
                    updates.push((x as u32, y as u32, mean));
                }
            }
        }
        debug_assert!(!updates.is_empty(), "a known seed always leaves a frontier");
        for &(x, y, c) in &updates {
            img.put(x, y, c);
            unknown[(y as i32 * w + x as i32) as usize] = false;
        }
        remaining -= updates.len();
    }
    true
}

/// Diffusion-free fallback: boundary propagation, then one 3x3 box blur
/// restricted to generated pixels. Unmasked pixels come back bit-exact.
pub fn classical_outpaint(request: &OutpaintRequest) -> Result<RgbImage> {
    request.mask.check_dims(request.patch.dims())?;
    let mut img = request.patch.clone();
    if request.mask.is_empty() {
        return Ok(img);
    }
    let mut unknown: Vec<bool> = request.mask.as_raw().iter().map(|&v| v != 0).collect();
    if !propagate(&mut img, &mut unknown) {
        return Err(Error::NoSeedPixels);
    }
    let (w, h) = (img.width() as i32, img.height() as i32);
    let filled = img.clone();
    for y in 0..h {
        for x in 0..w {
            if !request.mask.is_set(x as u32, y as u32) {
                continue;
            }
            let mut sum = [0u32; 3];
            let mut n = 0u32;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let p = filled.get(nx as u32, ny as u32);
                    for k in 0..3 {
                        sum[k] += p[k] as u32;
                    }
                    n += 1;
                }
            }
            img.put(x as u32, y as u32, sum.map(|s| quantize(s as f64 / n as f64)));
        }
    }
    Ok(img)
}

pub struct ClassicalOutpainter;

impl Outpainter for ClassicalOutpainter {
    fn outpaint(&self, request: &OutpaintRequest) -> Result<RgbImage> {
        classical_outpaint(request)
    }

    fn name(&self) -> &'static str {
        "classical"
    }
}

#[derive(Serialize, Deserialize)]
pub struct OutpaintWireRequest {
    pub image_png_b64: String,
    pub mask_png_b64: String,
    pub prompt: String,
}

#[derive(Serialize, Deserialize)]
pub struct OutpaintWireResponse {
    pub image_png_b64: String,
}

/// Client for `POST {endpoint}/outpaint`.
#[derive(Clone)]
pub struct RemoteOutpainter {
    client: JsonClient,
}

impl RemoteOutpainter {
    pub fn new(cfg: ClientConfig) -> Self {
        RemoteOutpainter {
            client: JsonClient::new(cfg),
        }
    }
}

/// Overwrites every unmasked pixel of `generated` with the request's patch.
pub fn recomposite(request: &OutpaintRequest, generated: &RgbImage) -> Result<RgbImage> {
    if generated.dims() != request.patch.dims() {
        return Err(Error::DimensionMismatch {
            expected: request.patch.dims(),
            actual: generated.dims(),
        });
    }
    let mut out = generated.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            if !request.mask.is_set(x, y) {
                out.put(x, y, request.patch.get(x, y));
            }
        }
    }
    Ok(out)
}

pub fn remote_outpaint(request: &OutpaintRequest, client: &RemoteOutpainter) -> Result<RgbImage> {
    request.mask.check_dims(request.patch.dims())?;
    if request.mask.is_empty() {
        return Ok(request.patch.clone());
    }
    let remote = |e: Error| Error::RemoteOutpainter(e.to_string());
    let body = OutpaintWireRequest {
        image_png_b64: codec::to_base64(&codec::encode_rgb_png(&request.patch)?),
        mask_png_b64: codec::to_base64(&codec::encode_mask_png(&request.mask)?),
        prompt: request.prompt.clone(),
    };
    let resp: OutpaintWireResponse = client.client.post("outpaint", &body).map_err(Error::RemoteOutpainter)?;
    let img = codec::decode_rgb_png(&codec::from_base64(&resp.image_png_b64).map_err(remote)?).map_err(remote)?;
    recomposite(request, &img).map_err(remote)
}

impl Outpainter for RemoteOutpainter {
    fn outpaint(&self, request: &OutpaintRequest) -> Result<RgbImage> {
        remote_outpaint(request, self)
    }

    fn name(&self) -> &'static str {
        "remote"
    }
}

/// Uses `primary`, switching to `fallback` for any request where it fails.
pub struct FallbackOutpainter<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Outpainter, F: Outpainter> Outpainter for FallbackOutpainter<P, F> {
    fn outpaint(&self, request: &OutpaintRequest) -> Result<RgbImage> {
        self.primary.outpaint(request).or_else(|e| {
            log::warn!(
                "{} outpainter failed: {e}; using {}",
                self.primary.name(),
                self.fallback.name()
            );
            self.fallback.outpaint(request)
        })
    }

    fn name(&self) -> &'static str {
        "fallback"
    }
}

/// Writes the selected cells of `filled` (in `rect` coordinates) to the
/// canvas as generated. Every selected cell must still be unknown; nothing is
/// written otherwise.
pub fn commit_generated(
    canvas: &mut CanvasState,
    filled: &RgbImage,
    region_mask: &Mask,
    rect: PixelRect,
) -> Result<usize> {
    region_mask.check_dims((rect.width, rect.height))?;
    if filled.dims() != region_mask.dims() {
        return Err(Error::DimensionMismatch {
            expected: region_mask.dims(),
            actual: filled.dims(),
        });
    }
    if rect.intersect(&canvas.bounds()) != Some(rect) {
        return Err(Error::InvariantViolation(format!(
            "commit rect {rect:?} leaves the canvas"
        )));
    }
    let cells = || {
        (0..rect.height)
            .flat_map(move |y| (0..rect.width).map(move |x| (x, y)))
            .filter(|&(x, y)| region_mask.is_set(x, y))
    };
    for (x, y) in cells() {
        let (cx, cy) = ((rect.x0 + x as i32) as u32, (rect.y0 + y as i32) as u32);
        let state = canvas.coverage(cx, cy);
        if state != Coverage::Unknown {
            return Err(Error::InvariantViolation(format!(
                "cell ({cx}, {cy}) is already {state:?}; refusing to generate it again"
            )));
        }
    }
    let mut written = 0;
    for (x, y) in cells() {
        let (cx, cy) = ((rect.x0 + x as i32) as u32, (rect.y0 + y as i32) as u32);
        canvas.write_generated(cx, cy, filled.get(x, y))?;
        written += 1;
    }
    Ok(written)
}

/// Request for `region`: the region's rect plus [`CONTEXT_MARGIN`] of canvas.
///
/// Unknown cells outside the region carry no information; they are filled by
/// propagation from known cells so the backend sees plausible context, and
/// are not part of the mask.
pub fn build_request(canvas: &CanvasState, region: &OutpaintRegion, prompt: &str) -> Result<OutpaintRequest> {
    let crop = region
        .rect
        .expand(CONTEXT_MARGIN)
        .intersect(&canvas.bounds())
        .ok_or_else(|| Error::InvariantViolation("outpaint region outside canvas".into()))?;
    let mut patch = RgbImage::new(crop.width, crop.height);
    let mut mask = Mask::new(crop.width, crop.height);
    let mut unknown = vec![false; crop.area()];
    for y in 0..crop.height {
        for x in 0..crop.width {
            let (cx, cy) = (crop.x0 + x as i32, crop.y0 + y as i32);
            if canvas.coverage(cx as u32, cy as u32) == Coverage::Unknown {
                unknown[(y * crop.width + x) as usize] = true;
                let (rx, ry) = (cx - region.rect.x0, cy - region.rect.y0);
                if region.rect.contains(cx, cy) && region.mask.is_set(rx as u32, ry as u32) {
                    mask.set(x, y, true);
                }
            } else {
                patch.put(x, y, canvas.background().get(cx as u32, cy as u32));
            }
        }
    }
    let has_void = unknown.iter().zip(mask.as_raw()).any(|(&u, &m)| u && m == 0);
    if has_void {
        let mut context = patch.clone();
        if !propagate(&mut context, &mut unknown) {
            return Err(Error::NoSeedPixels);
        }
        for y in 0..crop.height {
            for x in 0..crop.width {
                if !mask.is_set(x, y) {
                    patch.put(x, y, context.get(x, y));
                }
            }
        }
    }
    Ok(OutpaintRequest {
        patch,
        mask,
        prompt: prompt.to_string(),
        rect: crop,
    })
}

/// Fills whatever frame `frame_idx` still needs. Returns the number of cells
/// generated (0 when the canvas already covers the frame).
pub fn outpaint_frame(
    canvas: &mut CanvasState,
    frame_idx: usize,
    target: TargetSpec,
    outpainter: &dyn Outpainter,
    prompt: &str,
) -> Result<usize> {
    let region = select_outpaint_region(canvas, frame_idx, target)?;
    if region.is_empty() {
        return Ok(0);
    }
    let request = build_request(canvas, &region, prompt)?;
    let generated = outpainter.outpaint(&request)?;
    let generated = recomposite(&request, &generated)?;
    let ox = (region.rect.x0 - request.rect.x0) as u32;
    let oy = (region.rect.y0 - request.rect.y0) as u32;
    let filled = RgbImage::from_fn(region.rect.width, region.rect.height, |x, y| {
        generated.get(x + ox, y + oy)
    });
    commit_generated(canvas, &filled, &region.mask, region.rect)
}

/// Outpaints every frame of the scene in order; returns cells generated.
pub fn outpaint_scene(
    canvas: &mut CanvasState,
    target: TargetSpec,
    outpainter: &dyn Outpainter,
    prompt: &str,
) -> Result<usize> {
    let mut total = 0;
    for i in 0..canvas.frame_count() {
        total += outpaint_frame(canvas, i, target, outpainter, prompt)?;
    }
    Ok(total)
}
