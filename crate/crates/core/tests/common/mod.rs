#![allow(dead_code)]

use remaster_core::model::{compose, BilinearTaps, RgbImage};
use remaster_core::stitching::{CanvasState, Coverage};
use remaster_core::synthgen::SceneGroundTruth;
use remaster_core::Affine2D;

/// RMS distance between estimated and planted frame corners, over all frames.
///
/// The planted path is re-expressed on the canvas through frame 0, which
/// anchors both.
pub fn rms_corner_error(canvas: &CanvasState, truth: &SceneGroundTruth) -> f64 {
    let (w, h) = canvas.frame_dims;
    let corners = [
        (0.0, 0.0),
        ((w - 1) as f64, 0.0),
        (0.0, (h - 1) as f64),
        ((w - 1) as f64, (h - 1) as f64),
    ];
    let anchor = canvas.frame_transforms[0];
    let mut sum = 0.0;
    let mut n = 0.0;
    for (i, est) in canvas.frame_transforms.iter().enumerate() {
        let planted = compose(&truth.relative(i, 0).unwrap(), &anchor);
        for &(x, y) in &corners {
            let (ex, ey) = est.apply(x, y);
            let (px, py) = planted.apply(x, y);
            sum += (ex - px).powi(2) + (ey - py).powi(2);
            n += 1.0;
        }
    }
    (sum / n).sqrt()
}

/// Maps a canvas cell to true-background coordinates through frame 0.
pub fn canvas_to_background(canvas: &CanvasState, truth: &SceneGroundTruth) -> Affine2D {
    compose(
        &canvas.frame_transforms[0].inverse().unwrap(),
        &truth.true_transforms[0],
    )
}

/// PSNR (dB) of ORIGINAL canvas cells against the true background.
pub fn original_psnr(canvas: &CanvasState, truth: &SceneGroundTruth) -> f64 {
    let to_bg = canvas_to_background(canvas, truth);
    let bg = &truth.true_background;
    let mut se = 0.0;
    let mut n = 0usize;
    for y in 0..canvas.height() {
        for x in 0..canvas.width() {
            if canvas.coverage(x, y) != Coverage::Original {
                continue;
            }
            let (u, v) = to_bg.apply(x as f64, y as f64);
            let Some(t) = BilinearTaps::at(u, v, bg.width(), bg.height()) else {
                continue;
            };
            let want = t.sample(bg);
            let got = canvas.background().get(x, y);
            for k in 0..3 {
                se += (want[k] as f64 - got[k] as f64).powi(2);
            }
            n += 3;
        }
    }
    psnr_from_mse(se / n.max(1) as f64)
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

pub fn psnr(a: &RgbImage, b: &RgbImage) -> f64 {
    let se: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
        .sum();
    psnr_from_mse(se / a.as_raw().len() as f64)
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remaster_core::synthgen::{
    generate_episode, CameraPath, EpisodeGroundTruth, Palette, Pattern, SceneSpec, Shape, SpriteSpec, Transition,
};
use remaster_core::Frame;

/// Shape of a randomly generated episode.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeShape {
    pub width: u32,
    pub height: u32,
    pub scenes: (usize, usize),
    pub scene_len: (usize, usize),
    /// Largest per-frame camera step, in pixels.
    pub max_step: i32,
    pub max_sprites: usize,
}

fn random_camera(rng: &mut ChaCha8Rng, max_step: i32) -> CameraPath {
    match rng.random_range(0..3) {
        0 => CameraPath::Static,
        1 => CameraPath::Pan {
            dx: rng.random_range(-max_step..=max_step) as f64,
            dy: rng.random_range(-max_step / 4..=max_step / 4) as f64,
        },
        _ => CameraPath::RandomWalk {
            max_dx: max_step,
            max_dy: max_step / 2,
            seed: rng.random(),
        },
    }
}

fn random_sprite(rng: &mut ChaCha8Rng, w: u32, h: u32) -> SpriteSpec {
    let shape = if rng.random_bool(0.5) {
        Shape::Circle {
            radius: rng.random_range(4.0..(h as f64 / 8.0)),
        }
    } else {
        Shape::Rect {
            width: rng.random_range(6.0..(w as f64 / 5.0)),
            height: rng.random_range(6.0..(h as f64 / 5.0)),
        }
    };
    SpriteSpec {
        shape,
        color: [rng.random(), rng.random(), rng.random()],
        start: (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)),
        velocity: (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)),
    }
}

/// A random episode with hard cuts between scenes of alternating palettes.
pub fn random_episode(seed: u64, shape: EpisodeShape) -> (Vec<Frame>, EpisodeGroundTruth, Vec<SceneSpec>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(shape.scenes.0..=shape.scenes.1);
    let mut palette = if rng.random_bool(0.5) {
        Palette::Warm
    } else {
        Palette::Cool
    };
    let patterns = [
        Pattern::Gradient,
        Pattern::Checkerboard,
        Pattern::NoiseTexture,
        Pattern::Striped,
    ];
    let specs: Vec<SceneSpec> = (0..n)
        .map(|_| {
            let len = rng.random_range(shape.scene_len.0..=shape.scene_len.1);
            let camera = random_camera(&mut rng, shape.max_step);
            let mut spec = SceneSpec::textured(shape.width, shape.height, len, rng.random(), camera)
                .with_palette(palette)
                .with_pattern(patterns[rng.random_range(0..patterns.len())]);
            for _ in 0..rng.random_range(0..=shape.max_sprites) {
                spec = spec.with_sprite(random_sprite(&mut rng, shape.width, shape.height));
            }
            palette = palette.other();
            spec
        })
        .collect();
    let (frames, truth) = generate_episode(&specs, Transition::HardCut).expect("episode generation");
    (frames, truth, specs)
}
