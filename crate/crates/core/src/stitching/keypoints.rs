//! Corner detection (Shi-Tomasi minimum eigenvalue) and BRIEF-style binary
//! descriptors on a lightly smoothed luma image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

use crate::model::{Mask, RgbImage};

/// Half-size of the descriptor sampling patch.
pub const PATCH_RADIUS: i32 = 12;
/// Bits per descriptor.
pub const DESCRIPTOR_BITS: usize = 256;
const DESCRIPTOR_WORDS: usize = DESCRIPTOR_BITS / 64;
/// Minimum corner response as a fraction of the strongest response.
const RELATIVE_RESPONSE_FLOOR: f32 = 0.01;
/// Absolute response floor; rejects quantization-level texture.
const ABSOLUTE_RESPONSE_FLOOR: f32 = 20.0;
const NMS_RADIUS: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Descriptor(pub [u64; DESCRIPTOR_WORDS]);

impl Descriptor {
    #[inline]
    pub fn distance(&self, other: &Descriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f32,
    pub descriptor: Descriptor,
}

/// Single-channel float image.
#[derive(Clone, Debug)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Gray {
    pub fn from_rgb(img: &RgbImage) -> Self {
        let data = img
            .as_raw()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32)
            .collect();
        Gray {
            width: img.width() as usize,
            height: img.height() as usize,
            data,
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    fn at_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Separable [1 2 1]/4 blur, edge-clamped.
    pub fn blur(&self) -> Gray {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut tmp = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                tmp[(y * w + x) as usize] =
                    0.25 * self.at_clamped(x - 1, y) + 0.5 * self.at_clamped(x, y) + 0.25 * self.at_clamped(x + 1, y);
            }
        }
        let src = Gray {
            width: self.width,
            height: self.height,
            data: tmp,
        };
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) as usize] =
                    0.25 * src.at_clamped(x, y - 1) + 0.5 * src.at_clamped(x, y) + 0.25 * src.at_clamped(x, y + 1);
            }
        }
        Gray {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    /// Box-downsampled copy by an integer factor.
    pub fn downsample(&self, factor: usize) -> Gray {
        let (w, h) = (self.width / factor, self.height / factor);
        let mut data = Vec::with_capacity(w * h);
        let norm = 1.0 / (factor * factor) as f32;
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        s += self.at(x * factor + dx, y * factor + dy);
                    }
                }
                data.push(s * norm);
            }
        }
        Gray {
            width: w,
            height: h,
            data,
        }
    }
}

type BriefPattern = [((i32, i32), (i32, i32)); DESCRIPTOR_BITS];

/// Fixed sampling pairs inside the patch, identical for every call.
fn brief_pattern() -> &'static BriefPattern {
    static PATTERN: OnceLock<BriefPattern> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0b51_ef00);
        let r = PATCH_RADIUS;
        let sample = |rng: &mut ChaCha8Rng| {
            // Roughly isotropic Gaussian (sigma ~ r/2.5), clipped to the patch.
            let g = |rng: &mut ChaCha8Rng| {
                let s: f64 = (0..4).map(|_| rng.random::<f64>() - 0.5).sum();
                ((s * r as f64 * 0.7).round() as i32).clamp(-r, r)
            };
            (g(rng), g(rng))
        };
        std::array::from_fn(|_| loop {
            let p = sample(&mut rng);
            let q = sample(&mut rng);
            if p != q {
                break (p, q);
            }
        })
    })
}

fn describe(smooth: &Gray, x: usize, y: usize) -> Descriptor {
    let mut words = [0u64; DESCRIPTOR_WORDS];
    for (bit, &((ax, ay), (bx, by))) in brief_pattern().iter().enumerate() {
        let a = smooth.at((x as i32 + ax) as usize, (y as i32 + ay) as usize);
        let b = smooth.at((x as i32 + bx) as usize, (y as i32 + by) as usize);
        if a < b {
            words[bit / 64] |= 1 << (bit % 64);
        }
    }
    Descriptor(words)
}

/// Minimum eigenvalue of the 5x5-windowed structure tensor at every pixel.
fn corner_response(gray: &Gray) -> Vec<f32> {
    let (w, h) = (gray.width, gray.height);
    let mut ixx = vec![0f32; w * h];
    let mut iyy = vec![0f32; w * h];
    let mut ixy = vec![0f32; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            // Sobel
            let p = |dx: isize, dy: isize| gray.at((x as isize + dx) as usize, (y as isize + dy) as usize);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let i = y * w + x;
            ixx[i] = gx * gx / 64.0;
            iyy[i] = gy * gy / 64.0;
            ixy[i] = gx * gy / 64.0;
        }
    }
    let box_sum = |src: &[f32]| -> Vec<f32> {
        let r = 2isize;
        let mut tmp = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for k in -r..=r {
                    let xx = x as isize + k;
                    if xx >= 0 && (xx as usize) < w {
                        s += src[y * w + xx as usize];
                    }
                }
                tmp[y * w + x] = s;
            }
        }
        let mut out = vec![0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for k in -r..=r {
                    let yy = y as isize + k;
                    if yy >= 0 && (yy as usize) < h {
                        s += tmp[yy as usize * w + x];
                    }
                }
                out[y * w + x] = s;
            }
        }
        out
    };
    let sxx = box_sum(&ixx);
    let syy = box_sum(&iyy);
    let sxy = box_sum(&ixy);
    sxx.iter()
        .zip(&syy)
        .zip(&sxy)
        .map(|((&a, &c), &b)| {
            let half_trace = 0.5 * (a + c);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            half_trace - disc
        })
        .collect()
}

/// Detects up to `max_count` corners, strongest first, each with a descriptor.
///
/// Corners whose patch would leave the frame are dropped. Pixels set in
/// `exclude` are never reported. Ties are broken by raster order so the
/// result is deterministic.
pub fn detect_keypoints_masked(img: &RgbImage, max_count: usize, exclude: Option<&Mask>) -> Vec<Keypoint> {
    let gray = Gray::from_rgb(img);
    let (w, h) = (gray.width, gray.height);
    let border = PATCH_RADIUS as usize + 1;
    if w <= 2 * border || h <= 2 * border || max_count == 0 {
        return Vec::new();
    }
    let response = corner_response(&gray);
    let peak = response.iter().copied().fold(0f32, f32::max);
    let floor = (peak * RELATIVE_RESPONSE_FLOOR).max(ABSOLUTE_RESPONSE_FLOOR);

    let mut candidates = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            let r = response[y * w + x];
            if r < floor {
                continue;
            }
            if exclude.is_some_and(|m| m.is_set(x as u32, y as u32)) {
                continue;
            }
            // Strict local maximum, ties resolved towards the earlier pixel.
            let mut is_max = true;
            'nms: for dy in -NMS_RADIUS..=NMS_RADIUS {
                for dx in -NMS_RADIUS..=NMS_RADIUS {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                    let other = response[ny as usize * w + nx as usize];
                    let earlier = (dy, dx) < (0, 0);
                    if other > r || (other == r && earlier) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if is_max {
                candidates.push((r, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.2, a.1).cmp(&(b.2, b.1))));
    candidates.truncate(max_count);

    let smooth = gray.blur().blur();
    candidates
        .into_iter()
        .map(|(response, x, y)| Keypoint {
            x: x as f64,
            y: y as f64,
            response,
            descriptor: describe(&smooth, x, y),
        })
        .collect()
}

pub fn detect_keypoints(img: &RgbImage, max_count: usize) -> Vec<Keypoint> {
    detect_keypoints_masked(img, max_count, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_frame_has_no_keypoints() {
        let img = RgbImage::filled(64, 48, [128, 128, 128]);
        assert!(detect_keypoints(&img, 100).is_empty());
    }

    #[test]
    fn checkerboard_corners_on_lattice() {
        let cell = 16;
        let img = RgbImage::from_fn(128, 96, |x, y| {
            if (x / cell + y / cell) % 2 == 0 {
                [20, 20, 20]
            } else {
                [230, 230, 230]
            }
        });
        let kps = detect_keypoints(&img, 200);
        assert!(kps.len() >= 10, "found {}", kps.len());
        for kp in &kps {
            // Lattice corners sit between pixels 16k-1 and 16k.
            let near = |v: f64| {
                let c = (v / cell as f64).round() * cell as f64 - 0.5;
                (v - c).abs() <= 2.0
            };
            assert!(near(kp.x) && near(kp.y), "keypoint off lattice: {kp:?}");
        }
    }

    #[test]
    fn detection_is_deterministic_and_ordered() {
        let img = RgbImage::from_fn(96, 80, |x, y| {
            let v = ((x * 7 + y * 13) ^ (x * y)) as u8;
            [v, v.wrapping_mul(3), 255 - v]
        });
        let a = detect_keypoints(&img, 50);
        let b = detect_keypoints(&img.clone(), 50);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].response >= w[1].response));
        assert!(a.len() <= 50);
    }

    #[test]
    fn excluded_pixels_are_skipped() {
        let img = RgbImage::from_fn(
            96,
            80,
            |x, y| if (x / 12 + y / 12) % 2 == 0 { [0; 3] } else { [255; 3] },
        );
        let all = detect_keypoints(&img, 500);
        let exclude = Mask::from_fn(96, 80, |x, _| x < 48);
        let some = detect_keypoints_masked(&img, 500, Some(&exclude));
        assert!(!all.is_empty());
        assert!(some.iter().all(|k| k.x >= 48.0));
        assert!(some.len() < all.len());
    }

    #[test]
    fn hamming_distance() {
        let a = Descriptor([0, 0, 0, 0]);
        let b = Descriptor([0b1011, 0, 1, u64::MAX]);
        assert_eq!(a.distance(&b), 3 + 1 + 64);
        assert_eq!(b.distance(&b), 0);
    }
}
