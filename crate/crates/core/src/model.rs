//! Core raster and geometry types shared by every stage.
//!
//! Coordinates are pixel-index based: pixel `(x, y)` of a raster sits at the
//! real point `(x, y)`, so an integer translation maps pixels onto pixels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample coordinates closer than this to an integer are treated as integers.
pub const SNAP_EPSILON: f64 = 1e-6;

pub type Rgb = [u8; 3];

/// Row-major RGB8 raster.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0, 0, 0])
    }

    pub fn filled(width: u32, height: u32, color: Rgb) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let pixels = color
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        RgbImage { width, height, pixels }
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "raster dimensions must be positive, got {width}x{height}"
            )));
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(Error::InvalidInput(format!(
                "raster buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(RgbImage { width, height, pixels })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.put(x, y, f(x, y));
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn put(&mut self, x: u32, y: u32, color: Rgb) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    /// Copy of the sub-raster at `rect`, which must lie inside this raster.
    pub fn crop(&self, rect: PixelRect) -> Result<RgbImage> {
        if rect.x0 < 0
            || rect.y0 < 0
            || rect.x0 as i64 + rect.width as i64 > self.width as i64
            || rect.y0 as i64 + rect.height as i64 > self.height as i64
        {
            return Err(Error::InvalidInput(format!(
                "crop {rect:?} exceeds {}x{} raster",
                self.width, self.height
            )));
        }
        Ok(RgbImage::from_fn(rect.width, rect.height, |x, y| {
            self.get(rect.x0 as u32 + x, rect.y0 as u32 + y)
        }))
    }
}

impl fmt::Debug for RgbImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbImage({}x{})", self.width, self.height)
    }
}

/// A decoded video frame. `index` is the frame's ordinal within its scene.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Frame {
    pub index: usize,
    pub image: RgbImage,
}

impl Frame {
    pub fn new(index: usize, image: RgbImage) -> Self {
        Frame { index, image }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.image.height()
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        self.image.dims()
    }
}

/// Binary per-pixel mask: 0 = background, 255 = foreground (or "selected").
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl Mask {
    pub const ON: u8 = 255;
    pub const OFF: u8 = 0;

    pub fn new(width: u32, height: u32) -> Self {
        Mask {
            width,
            height,
            values: vec![0; width as usize * height as usize],
        }
    }

    /// Builds a mask from raw bytes, rejecting anything that is not 0 or 255.
    pub fn from_raw(width: u32, height: u32, values: Vec<u8>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::InvalidInput(format!(
                "mask buffer has {} bytes, expected {}",
                values.len(),
                width as usize * height as usize
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v != 0 && v != 255) {
            return Err(Error::InvalidInput(format!("mask value {v} is not binary")));
        }
        Ok(Mask { width, height, values })
    }

    /// Binarizes grayscale values: `>= threshold` becomes 255.
    pub fn binarize(width: u32, height: u32, gray: &[u8], threshold: u8) -> Result<Self> {
        let values = gray.iter().map(|&v| if v >= threshold { 255 } else { 0 }).collect();
        Self::from_raw(width, height, values)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn is_set(&self, x: u32, y: u32) -> bool {
        self.values[y as usize * self.width as usize + x as usize] != 0
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.values[y as usize * self.width as usize + x as usize] = if on { Self::ON } else { Self::OFF };
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0 || v == 255)
    }

    pub fn check_dims(&self, dims: (u32, u32)) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: self.dims(),
            });
        }
        Ok(())
    }

    /// Chebyshev dilation by `radius` pixels (square structuring element).
    pub fn dilate(&self, radius: u32) -> Mask {
        self.morph(radius, true)
    }

    /// Chebyshev erosion by `radius` pixels. Pixels outside the raster count as set.
    pub fn erode(&self, radius: u32) -> Mask {
        self.morph(radius, false)
    }

    fn morph(&self, radius: u32, dilate: bool) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let (w, h) = (self.width as i64, self.height as i64);
        let r = radius as i64;
        // Separable: horizontal pass then vertical pass.
        let pass = |src: &[u8], horizontal: bool| -> Vec<u8> {
            let mut out = vec![0u8; src.len()];
            for y in 0..h {
                for x in 0..w {
                    let mut hit = !dilate;
                    for k in -r..=r {
                        let (sx, sy) = if horizontal { (x + k, y) } else { (x, y + k) };
                        if sx < 0 || sy < 0 || sx >= w || sy >= h {
                            continue;
                        }
                        let on = src[(sy * w + sx) as usize] != 0;
                        if dilate && on {
                            hit = true;
                            break;
                        }
                        if !dilate && !on {
                            hit = false;
                            break;
                        }
                    }
                    out[(y * w + x) as usize] = if hit { 255 } else { 0 };
                }
            }
            out
        };
        let tmp = pass(&self.values, true);
        let values = pass(&tmp, false);
        Mask {
            width: self.width,
            height: self.height,
            values,
        }
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mask({}x{}, {} set)", self.width, self.height, self.count())
    }
}

/// Affine map `(x, y) -> (a*x + b*y + tx, c*x + d*y + ty)`.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct Affine2D {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Affine2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Affine2D {
    pub const IDENTITY: Affine2D = Affine2D {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64, d: f64, tx: f64, ty: f64) -> Self {
        Affine2D { a, b, c, d, tx, ty }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine2D {
            tx,
            ty,
            ..Self::IDENTITY
        }
    }

    pub fn scale(s: f64) -> Self {
        Affine2D::new(s, 0.0, 0.0, s, 0.0, 0.0)
    }

    /// Rotation by `theta` radians about `(cx, cy)`.
    pub fn rotation_about(theta: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Affine2D::new(c, -s, s, c, cx - c * cx + s * cy, cy - s * cx - c * cy)
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty)
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// The map `p -> second(self(p))`.
    pub fn then(&self, second: &Affine2D) -> Affine2D {
        compose(self, second)
    }

    pub fn inverse(&self) -> Result<Affine2D> {
        invert(self)
    }

    /// True when the linear part is the identity (pure translation).
    pub fn is_translation(&self, tol: f64) -> bool {
        (self.a - 1.0).abs() <= tol && self.b.abs() <= tol && self.c.abs() <= tol && (self.d - 1.0).abs() <= tol
    }

    pub fn coefficients(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.d, self.tx, self.ty]
    }

    pub fn max_coefficient_diff(&self, other: &Affine2D) -> f64 {
        self.coefficients()
            .iter()
            .zip(other.coefficients())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    }
}

/// Returns the map sending `p` to `second(first(p))`.
pub fn compose(first: &Affine2D, second: &Affine2D) -> Affine2D {
    let s = second;
    let f = first;
    Affine2D {
        a: s.a * f.a + s.b * f.c,
        b: s.a * f.b + s.b * f.d,
        c: s.c * f.a + s.d * f.c,
        d: s.c * f.b + s.d * f.d,
        tx: s.a * f.tx + s.b * f.ty + s.tx,
        ty: s.c * f.tx + s.d * f.ty + s.ty,
    }
}

pub fn invert(t: &Affine2D) -> Result<Affine2D> {
    let det = t.det();
    if det.abs() < 1e-12 {
        return Err(Error::SingularTransform(det.abs()));
    }
    let a = t.d / det;
    let b = -t.b / det;
    let c = -t.c / det;
    let d = t.a / det;
    Ok(Affine2D {
        a,
        b,
        c,
        d,
        tx: -(a * t.tx + b * t.ty),
        ty: -(c * t.tx + d * t.ty),
    })
}

/// Axis-aligned integer rectangle in raster or canvas coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: i32,
    pub y0: i32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn new(x0: i32, y0: i32, width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "rect dimensions must be positive");
        PixelRect { x0, y0, width, height }
    }

    #[inline]
    pub fn x1(&self) -> i32 {
        self.x0 + self.width as i32
    }

    #[inline]
    pub fn y1(&self) -> i32 {
        self.y0 + self.height as i32
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && x < self.x1() && y >= self.y0 && y < self.y1()
    }

    pub fn area(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Intersection, or `None` when disjoint.
    pub fn intersect(&self, other: &PixelRect) -> Option<PixelRect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1().min(other.x1());
        let y1 = self.y1().min(other.y1());
        (x1 > x0 && y1 > y0).then(|| PixelRect::new(x0, y0, (x1 - x0) as u32, (y1 - y0) as u32))
    }

    /// Grows the rect by `margin` on every side.
    pub fn expand(&self, margin: u32) -> PixelRect {
        let m = margin as i32;
        PixelRect::new(
            self.x0 - m,
            self.y0 - m,
            self.width + 2 * margin,
            self.height + 2 * margin,
        )
    }
}

/// Target display aspect, e.g. 16:9.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TargetSpec {
    pub aspect_w: u32,
    pub aspect_h: u32,
}

impl TargetSpec {
    pub const WIDESCREEN: TargetSpec = TargetSpec {
        aspect_w: 16,
        aspect_h: 9,
    };

    pub fn new(aspect_w: u32, aspect_h: u32) -> Result<Self> {
        if aspect_w == 0 || aspect_h == 0 {
            return Err(Error::InvalidInput(format!(
                "aspect {aspect_w}:{aspect_h} must be positive"
            )));
        }
        Ok(TargetSpec { aspect_w, aspect_h })
    }

    pub fn dimensions(&self, src_w: u32, src_h: u32) -> Result<(u32, u32)> {
        target_dimensions(src_w, src_h, *self)
    }

    /// Left/right pillar widths for a source of the given size.
    pub fn margins(&self, src_w: u32, src_h: u32) -> Result<Margins> {
        let (w, _) = self.dimensions(src_w, src_h)?;
        Ok(Margins::split(w - src_w))
    }
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self::WIDESCREEN
    }
}

impl fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.aspect_w, self.aspect_h)
    }
}

impl FromStr for TargetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("aspect {s:?} is not of the form W:H")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidInput(format!("aspect {s:?} is not of the form W:H")))
        };
        TargetSpec::new(parse(w)?, parse(h)?)
    }
}

/// Horizontal padding around the source frame inside the expanded frame.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Margins {
    pub left: u32,
    pub right: u32,
}

impl Margins {
    /// Splits `total` evenly; an odd remainder pixel goes to the right.
    pub fn split(total: u32) -> Self {
        Margins {
            left: total / 2,
            right: total - total / 2,
        }
    }
}

/// Output dimensions for expanding `src_w x src_h` to the target aspect.
///
/// Height is preserved; width is `src_h * aspect_w / aspect_h` rounded up to
/// the next even integer.
pub fn target_dimensions(src_w: u32, src_h: u32, spec: TargetSpec) -> Result<(u32, u32)> {
    if src_w == 0 || src_h == 0 {
        return Err(Error::InvalidInput(format!(
            "source dimensions must be positive, got {src_w}x{src_h}"
        )));
    }
    if spec.aspect_w == 0 || spec.aspect_h == 0 {
        return Err(Error::InvalidInput(format!("invalid aspect {spec}")));
    }
    let (aw, ah) = (spec.aspect_w as u64, spec.aspect_h as u64);
    let mut width = (src_h as u64 * aw).div_ceil(ah);
    if width % 2 == 1 {
        width += 1;
    }
    // Compared after rounding so that feeding an output back is a no-op.
    if width < src_w as u64 {
        return Err(Error::UnsupportedAspect {
            aspect_w: spec.aspect_w,
            aspect_h: spec.aspect_h,
            src_w,
            src_h,
        });
    }
    let width = u32::try_from(width).map_err(|_| Error::InvalidInput(format!("target width {width} overflows")))?;
    Ok((width, src_h))
}

/// Rounds coordinates within [`SNAP_EPSILON`] of an integer onto it.
#[inline]
pub fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_EPSILON {
        r
    } else {
        v
    }
}

/// Pixels contributing to a bilinear sample at `(x, y)` with nonzero weight.
///
/// Coordinates must already be inside `[0, w-1] x [0, h-1]` after snapping.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTaps {
    pub x0: u32,
    pub y0: u32,
    pub fx: f64,
    pub fy: f64,
}

impl BilinearTaps {
    pub fn at(x: f64, y: f64, width: u32, height: u32) -> Option<Self> {
        let (x, y) = (snap(x), snap(y));
        if !(x >= 0.0 && y >= 0.0 && x <= (width - 1) as f64 && y <= (height - 1) as f64) {
            return None;
        }
        let x0 = x.floor() as u32;
        let y0 = y.floor() as u32;
        Some(BilinearTaps {
            x0,
            y0,
            fx: x - x0 as f64,
            fy: y - y0 as f64,
        })
    }

    /// Clamps the point onto the raster first.
    pub fn clamped(x: f64, y: f64, width: u32, height: u32) -> Self {
        let x = x.clamp(0.0, (width - 1) as f64);
        let y = y.clamp(0.0, (height - 1) as f64);
        Self::at(x, y, width, height).expect("clamped point is in bounds")
    }

    /// Visits each tap `(x, y, weight)` with nonzero weight.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(u32, u32, f64)) {
        let (fx, fy) = (self.fx, self.fy);
        f(self.x0, self.y0, (1.0 - fx) * (1.0 - fy));
        if fx > 0.0 {
            f(self.x0 + 1, self.y0, fx * (1.0 - fy));
        }
        if fy > 0.0 {
            f(self.x0, self.y0 + 1, (1.0 - fx) * fy);
            if fx > 0.0 {
                f(self.x0 + 1, self.y0 + 1, fx * fy);
            }
        }
    }

    #[inline]
    pub fn sample(&self, img: &RgbImage) -> Rgb {
        if self.fx == 0.0 && self.fy == 0.0 {
            return img.get(self.x0, self.y0);
        }
        let mut acc = [0.0f64; 3];
        self.for_each(|x, y, w| {
            let p = img.get(x, y);
            for k in 0..3 {
                acc[k] += w * p[k] as f64;
            }
        });
        acc.map(quantize)
    }
}

/// Round-half-up quantization to u8.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear sample of `img` at `(x, y)`; exact at integer coordinates.
pub fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> Result<Rgb> {
    BilinearTaps::at(x, y, img.width(), img.height())
        .map(|t| t.sample(img))
        .ok_or(Error::OutOfBounds {
            x,
            y,
            width: img.width(),
            height: img.height(),
        })
}
