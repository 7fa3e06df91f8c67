use crate::error::{Error, Result};
use crate::model::{compose, Affine2D, BilinearTaps, Margins, PixelRect, Rgb, RgbImage};

/// Provenance of a canvas cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Coverage {
    Unknown = 0,
    /// Copied from a source frame.
    Original = 1,
    /// Produced by an outpainter.
    Generated = 2,
}

/// Per-scene panoramic background and its coverage bookkeeping.
///
/// Cells only ever move out of `Unknown`, and only once.
#[derive(Clone, Debug)]
pub struct CanvasState {
    background: RgbImage,
    coverage: Vec<Coverage>,
    /// Canvas position of frame 0's top-left pixel.
    pub origin_offset: (i32, i32),
    /// Frame coords -> canvas coords, one per frame.
    pub frame_transforms: Vec<Affine2D>,
    pub frame_dims: (u32, u32),
    pub target_dims: (u32, u32),
    pub margins: Margins,
}

impl CanvasState {
    pub(crate) fn new(
        width: u32,
        height: u32,
        origin_offset: (i32, i32),
        frame_transforms: Vec<Affine2D>,
        frame_dims: (u32, u32),
        target_dims: (u32, u32),
        margins: Margins,
    ) -> Self {
        CanvasState {
            background: RgbImage::new(width, height),
            coverage: vec![Coverage::Unknown; width as usize * height as usize],
            origin_offset,
            frame_transforms,
            frame_dims,
            target_dims,
            margins,
        }
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.background.width()
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.background.height()
    }

    pub fn dims(&self) -> (u32, u32) {
        self.background.dims()
    }

    pub fn background(&self) -> &RgbImage {
        &self.background
    }

    pub fn bounds(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width(), self.height())
    }

    #[inline]
    pub fn coverage(&self, x: u32, y: u32) -> Coverage {
        self.coverage[y as usize * self.width() as usize + x as usize]
    }

    pub fn count(&self, state: Coverage) -> usize {
        self.coverage.iter().filter(|&&c| c == state).count()
    }

    pub fn frame_count(&self) -> usize {
        self.frame_transforms.len()
    }

    /// Writes a cell copied from a source frame. No-op unless the cell is unknown.
    pub(crate) fn write_original(&mut self, x: u32, y: u32, color: Rgb) -> bool {
        let i = y as usize * self.width() as usize + x as usize;
        if self.coverage[i] != Coverage::Unknown {
            return false;
        }
        self.coverage[i] = Coverage::Original;
        self.background.put(x, y, color);
        true
    }

    /// Writes a generated cell; the cell must be unknown.
    pub(crate) fn write_generated(&mut self, x: u32, y: u32, color: Rgb) -> Result<()> {
        let i = y as usize * self.width() as usize + x as usize;
        if self.coverage[i] != Coverage::Unknown {
            return Err(Error::InvariantViolation(format!(
                "cell ({x}, {y}) is {:?}, cannot mark it generated",
                self.coverage[i]
            )));
        }
        self.coverage[i] = Coverage::Generated;
        self.background.put(x, y, color);
        Ok(())
    }

    /// Map from expanded-output pixel coords of frame `i` into the canvas.
    pub fn output_transform(&self, i: usize) -> Affine2D {
        compose(
            &Affine2D::translation(-(self.margins.left as f64), 0.0),
            &self.frame_transforms[i],
        )
    }

    /// Visits each canvas cell a bilinear resample of frame `i`'s expanded
    /// rect reads with nonzero weight (possibly repeatedly).
    pub fn for_each_support_cell(&self, i: usize, mut f: impl FnMut(u32, u32)) {
        let t = self.output_transform(i);
        let (tw, th) = self.target_dims;
        for v in 0..th {
            for u in 0..tw {
                let (x, y) = t.apply(u as f64, v as f64);
                BilinearTaps::clamped(x, y, self.width(), self.height()).for_each(|cx, cy, _| f(cx, cy));
            }
        }
    }

    /// Bounding box of frame `i`'s expanded rect on the canvas.
    pub fn expanded_rect(&self, i: usize) -> PixelRect {
        let t = self.output_transform(i);
        let (tw, th) = self.target_dims;
        transformed_bbox(&t, tw, th)
            .intersect(&self.bounds())
            .unwrap_or_else(|| PixelRect::new(0, 0, 1, 1))
    }

    /// Coverage rendered for inspection: black unknown, white original,
    /// magenta generated.
    pub fn coverage_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width(), self.height(), |x, y| match self.coverage(x, y) {
            Coverage::Unknown => [0, 0, 0],
            Coverage::Original => [255, 255, 255],
            Coverage::Generated => [255, 0, 255],
        })
    }
}

/// Integer bounding box of the `w x h` pixel grid mapped through `t`.
pub fn transformed_bbox(t: &Affine2D, w: u32, h: u32) -> PixelRect {
    let (min_x, min_y, max_x, max_y) = transformed_extent(t, w, h);
    PixelRect::new(min_x, min_y, (max_x - min_x + 1) as u32, (max_y - min_y + 1) as u32)
}

pub(crate) fn transformed_extent(t: &Affine2D, w: u32, h: u32) -> (i32, i32, i32, i32) {
    let (wf, hf) = ((w - 1) as f64, (h - 1) as f64);
    let mut ext = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for (x, y) in [(0.0, 0.0), (wf, 0.0), (0.0, hf), (wf, hf)] {
        let (u, v) = t.apply(x, y);
        let (u, v) = (crate::model::snap(u), crate::model::snap(v));
        ext.0 = ext.0.min(u.floor() as i32);
        ext.1 = ext.1.min(v.floor() as i32);
        ext.2 = ext.2.max(u.ceil() as i32);
        ext.3 = ext.3.max(v.ceil() as i32);
    }
    ext
}
