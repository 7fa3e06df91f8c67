//! Deterministic synthetic scenes with full ground truth.
//!
//! A scene is a large procedural background viewed through a moving camera
//! (one affine map per frame, frame coords -> background coords) with
//! optional flat-colored sprites drawn on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compose, Affine2D, BilinearTaps, Frame, Mask, Rgb, RgbImage};
use crate::scenedetect::{content_score, SceneDetectConfig};

/// Empty border kept around the camera path when sizing the background.
const BACKGROUND_PADDING: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Gradient,
    Checkerboard,
    NoiseTexture,
    Striped,
}

/// Color family for a background. Adjacent scenes of an episode should use
/// different families so the cut between them is unambiguous.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Palette {
    /// Saturated oranges.
    Warm,
    /// Desaturated blues.
    Cool,
}

impl Palette {
    /// (hue degrees, saturation, value) ranges.
    fn ranges(self) -> ([f64; 2], [f64; 2], [f64; 2]) {
        match self {
            Palette::Warm => ([8.0, 24.0], [0.76, 0.94], [0.55, 0.85]),
            Palette::Cool => ([200.0, 216.0], [0.16, 0.34], [0.58, 0.88]),
        }
    }

    pub fn other(self) -> Palette {
        match self {
            Palette::Warm => Palette::Cool,
            Palette::Cool => Palette::Warm,
        }
    }

    fn at(self, t: [f64; 3]) -> Rgb {
        let (h, s, v) = self.ranges();
        let lerp = |r: [f64; 2], t: f64| r[0] + (r[1] - r[0]) * t;
        hsv_to_rgb(lerp(h, t[0]), lerp(s, t[1]), lerp(v, t[2]))
    }

    fn random(self, rng: &mut impl Rng) -> Rgb {
        self.at([rng.random(), rng.random(), rng.random()])
    }
}

fn hsv_to_rgb(h_deg: f64, s: f64, v: f64) -> Rgb {
    let c = v * s;
    let hp = (h_deg / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub pattern: Pattern,
    pub seed: u64,
    pub palette: Palette,
}

/// Camera motion, expressed relative to frame 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraPath {
    Static,
    /// Constant per-frame translation.
    Pan {
        dx: f64,
        dy: f64,
    },
    /// Integer steps drawn uniformly from `[-max_dx, max_dx] x [-max_dy, max_dy]`.
    RandomWalk {
        max_dx: i32,
        max_dy: i32,
        seed: u64,
    },
    /// Explicit frame -> world maps, one per frame.
    Transforms(Vec<Affine2D>),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    Circle { radius: f64 },
    Rect { width: f64, height: f64 },
}

/// A flat sprite moving linearly in frame coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteSpec {
    pub shape: Shape,
    pub color: Rgb,
    /// Circle center or rect top-left at frame 0.
    pub start: (f64, f64),
    /// Displacement per frame.
    pub velocity: (f64, f64),
}

impl SpriteSpec {
    pub fn position(&self, frame: usize) -> (f64, f64) {
        (
            self.start.0 + self.velocity.0 * frame as f64,
            self.start.1 + self.velocity.1 * frame as f64,
        )
    }

    fn covers(&self, frame: usize, x: f64, y: f64) -> bool {
        let (px, py) = self.position(frame);
        match self.shape {
            Shape::Circle { radius } => (x - px).powi(2) + (y - py).powi(2) <= radius * radius,
            Shape::Rect { width, height } => x >= px && x < px + width && y >= py && y < py + height,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub frame_count: usize,
    pub background: BackgroundSpec,
    pub camera: CameraPath,
    #[serde(default)]
    pub sprites: Vec<SpriteSpec>,
    /// Fixed background size; camera maps are then used verbatim and must
    /// stay inside it. When absent the background is sized to fit the path.
    #[serde(default)]
    pub background_size: Option<(u32, u32)>,
}

impl SceneSpec {
    /// A textured background with the given camera path and no sprites.
    pub fn textured(width: u32, height: u32, frame_count: usize, seed: u64, camera: CameraPath) -> Self {
        SceneSpec {
            width,
            height,
            frame_count,
            background: BackgroundSpec {
                pattern: Pattern::NoiseTexture,
                seed,
                palette: Palette::Warm,
            },
            camera,
            sprites: Vec::new(),
            background_size: None,
        }
    }

    pub fn with_palette(mut self, palette: Palette) -> Self {
        self.background.palette = palette;
        self
    }

    pub fn with_pattern(mut self, pattern: Pattern) -> Self {
        self.background.pattern = pattern;
        self
    }

    pub fn with_sprite(mut self, sprite: SpriteSpec) -> Self {
        self.sprites.push(sprite);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Spec("frame dimensions must be positive".into()));
        }
        if self.frame_count == 0 {
            return Err(Error::Spec("frame_count must be >= 1".into()));
        }
        if let CameraPath::Transforms(ts) = &self.camera {
            if ts.len() != self.frame_count {
                return Err(Error::Spec(format!(
                    "camera path has {} transforms for {} frames",
                    ts.len(),
                    self.frame_count
                )));
            }
            if let Some(t) = ts.iter().find(|t| t.det().abs() < 1e-6) {
                return Err(Error::Spec(format!("camera transform {t:?} is singular")));
            }
        }
        Ok(())
    }

    /// Camera maps relative to frame 0 (before placement on the background).
    fn relative_path(&self) -> Vec<Affine2D> {
        match &self.camera {
            CameraPath::Static => vec![Affine2D::IDENTITY; self.frame_count],
            CameraPath::Pan { dx, dy } => (0..self.frame_count)
                .map(|i| Affine2D::translation(dx * i as f64, dy * i as f64))
                .collect(),
            CameraPath::RandomWalk { max_dx, max_dy, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let (mut x, mut y) = (0i64, 0i64);
                (0..self.frame_count)
                    .map(|i| {
                        if i > 0 {
                            x += rng.random_range(-*max_dx..=*max_dx) as i64;
                            y += rng.random_range(-*max_dy..=*max_dy) as i64;
                        }
                        Affine2D::translation(x as f64, y as f64)
                    })
                    .collect()
            }
            CameraPath::Transforms(ts) => ts.clone(),
        }
    }
}

/// Everything the generator knows about a rendered scene.
#[derive(Clone, Debug)]
pub struct SceneGroundTruth {
    pub true_background: RgbImage,
    /// Frame coords -> background coords, per frame.
    pub true_transforms: Vec<Affine2D>,
    pub true_sprite_masks: Vec<Mask>,
    /// Cut positions; empty for a single scene.
    pub cut_indices: Vec<usize>,
}

impl SceneGroundTruth {
    /// Re-renders frame `i` from the ground-truth model.
    pub fn render(&self, spec: &SceneSpec, i: usize) -> Result<Frame> {
        render_frame(spec, &self.true_background, &self.true_transforms[i], i)
    }

    /// True map from frame `i` coords into frame `j` coords.
    pub fn relative(&self, i: usize, j: usize) -> Result<Affine2D> {
        Ok(compose(&self.true_transforms[i], &self.true_transforms[j].inverse()?))
    }
}

fn corners(w: u32, h: u32) -> [(f64, f64); 4] {
    let (w, h) = ((w - 1) as f64, (h - 1) as f64);
    [(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]
}

fn render_frame(spec: &SceneSpec, bg: &RgbImage, t: &Affine2D, i: usize) -> Result<Frame> {
    let mut img = RgbImage::new(spec.width, spec.height);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let (u, v) = t.apply(x as f64, y as f64);
            let taps = BilinearTaps::at(u, v, bg.width(), bg.height())
                .ok_or_else(|| Error::Spec(format!("frame {i} samples outside the background")))?;
            let mut color = taps.sample(bg);
            for sprite in &spec.sprites {
                if sprite.covers(i, x as f64, y as f64) {
                    color = sprite.color;
                }
            }
            img.put(x, y, color);
        }
    }
    Ok(Frame::new(i, img))
}

fn sprite_mask(spec: &SceneSpec, i: usize) -> Mask {
    Mask::from_fn(spec.width, spec.height, |x, y| {
        spec.sprites.iter().any(|s| s.covers(i, x as f64, y as f64))
    })
}

fn two_tone(palette: Palette) -> (Rgb, Rgb) {
    (palette.at([0.3, 0.7, 0.3]), palette.at([0.7, 0.3, 0.7]))
}

pub fn render_background(spec: &BackgroundSpec, width: u32, height: u32) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let palette = spec.palette;
    match spec.pattern {
        Pattern::Gradient => {
            let (w, h) = (width.max(2) as f64 - 1.0, height.max(2) as f64 - 1.0);
            RgbImage::from_fn(width, height, |x, y| {
                let (tx, ty) = (x as f64 / w, y as f64 / h);
                palette.at([0.5 * (tx + ty), 0.5, 0.2 + 0.6 * tx])
            })
        }
        Pattern::Checkerboard => {
            // Two colors close enough that a full flip stays well under the
            // default cut threshold.
            let (a, b) = two_tone(palette);
            RgbImage::from_fn(width, height, |x, y| if (x / 16 + y / 16) % 2 == 0 { a } else { b })
        }
        Pattern::Striped => {
            let (a, b) = two_tone(palette);
            RgbImage::from_fn(width, height, |x, _| if (x / 8) % 2 == 0 { a } else { b })
        }
        Pattern::NoiseTexture => {
            let mut img = RgbImage::filled(width, height, palette.random(&mut rng));
            let count = (width as usize * height as usize) / 90;
            for _ in 0..count {
                let rw = rng.random_range(3..=24u32);
                let rh = rng.random_range(3..=24u32);
                let x0 = rng.random_range(0..width) as i64 - rw as i64 / 2;
                let y0 = rng.random_range(0..height) as i64 - rh as i64 / 2;
                let color = palette.random(&mut rng);
                for y in y0.max(0)..(y0 + rh as i64).min(height as i64) {
                    for x in x0.max(0)..(x0 + rw as i64).min(width as i64) {
                        img.put(x as u32, y as u32, color);
                    }
                }
            }
            img
        }
    }
}

/// Renders a scene and its ground truth.
pub fn generate_scene(spec: &SceneSpec) -> Result<(Vec<Frame>, SceneGroundTruth)> {
    spec.validate()?;
    let relative = spec.relative_path();

    let (bg_w, bg_h, placement) = match spec.background_size {
        Some((w, h)) => (w, h, Affine2D::IDENTITY),
        None => {
            let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
            let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for t in &relative {
                for (x, y) in corners(spec.width, spec.height) {
                    let (u, v) = t.apply(x, y);
                    min_x = min_x.min(u);
                    min_y = min_y.min(v);
                    max_x = max_x.max(u);
                    max_y = max_y.max(v);
                }
            }
            let ox = BACKGROUND_PADDING - min_x.floor();
            let oy = BACKGROUND_PADDING - min_y.floor();
            let w = (max_x.ceil() + ox + BACKGROUND_PADDING) as u32 + 1;
            let h = (max_y.ceil() + oy + BACKGROUND_PADDING) as u32 + 1;
            (w, h, Affine2D::translation(ox, oy))
        }
    };
    if bg_w == 0 || bg_h == 0 {
        return Err(Error::Spec("background size must be positive".into()));
    }
    let true_transforms: Vec<Affine2D> = relative.iter().map(|t| compose(t, &placement)).collect();
    for (i, t) in true_transforms.iter().enumerate() {
        for (x, y) in corners(spec.width, spec.height) {
            let (u, v) = t.apply(x, y);
            if u < 0.0 || v < 0.0 || u > (bg_w - 1) as f64 || v > (bg_h - 1) as f64 {
                return Err(Error::Spec(format!(
                    "camera path leaves the {bg_w}x{bg_h} background at frame {i}"
                )));
            }
        }
    }

    let background = render_background(&spec.background, bg_w, bg_h);
    let frames = true_transforms
        .iter()
        .enumerate()
        .map(|(i, t)| render_frame(spec, &background, t, i))
        .collect::<Result<Vec<_>>>()?;
    let masks = (0..spec.frame_count).map(|i| sprite_mask(spec, i)).collect();
    Ok((
        frames,
        SceneGroundTruth {
            true_background: background,
            true_transforms,
            true_sprite_masks: masks,
            cut_indices: Vec::new(),
        },
    ))
}

#[derive(Clone, Debug)]
pub struct EpisodeGroundTruth {
    pub scenes: Vec<SceneGroundTruth>,
    pub cut_indices: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    #[default]
    HardCut,
}

/// Concatenates scenes with hard cuts between them.
///
/// Each cut must score above three times the default detection threshold,
/// otherwise the episode is rejected.
pub fn generate_episode(specs: &[SceneSpec], _transition: Transition) -> Result<(Vec<Frame>, EpisodeGroundTruth)> {
    if specs.is_empty() {
        return Err(Error::Spec("episode needs at least one scene".into()));
    }
    let dims = (specs[0].width, specs[0].height);
    if let Some(s) = specs.iter().find(|s| (s.width, s.height) != dims) {
        return Err(Error::Spec(format!(
            "scene dims {}x{} differ from {}x{}",
            s.width, s.height, dims.0, dims.1
        )));
    }
    if specs.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Spec("consecutive scenes are identical".into()));
    }

    let min_cut_score = 3.0 * SceneDetectConfig::default().threshold;
    let mut frames: Vec<Frame> = Vec::new();
    let mut scenes = Vec::with_capacity(specs.len());
    let mut cut_indices = Vec::new();
    for spec in specs {
        let (scene_frames, truth) = generate_scene(spec)?;
        if let Some(last) = frames.last() {
            let score = content_score(last, &scene_frames[0])?;
            if score <= min_cut_score {
                return Err(Error::Spec(format!(
                    "cut at frame {} scores {score:.1}, needs > {min_cut_score}",
                    frames.len()
                )));
            }
            cut_indices.push(frames.len());
        }
        let base = frames.len();
        frames.extend(scene_frames.into_iter().map(|f| Frame::new(base + f.index, f.image)));
        scenes.push(truth);
    }
    for scene in &mut scenes {
        scene.cut_indices = cut_indices.clone();
    }
    Ok((frames, EpisodeGroundTruth { scenes, cut_indices }))
}
