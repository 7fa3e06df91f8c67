//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Classical backends only.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use common::{random_episode, EpisodeShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remaster_core::masking::empty_masks;
use remaster_core::outpainting::{
    classical_outpaint, outpaint_scene, select_outpaint_region, OutpaintRequest, Outpainter, DEFAULT_PROMPT,
};
use remaster_core::pipeline::{expand_frames, expand_video, io, Backend, PipelineConfig};
use remaster_core::resample::reconstruct_scene;
use remaster_core::scenedetect::{detect_cuts, SceneDetectConfig};
use remaster_core::stitching::{estimate_affine_ransac, stitch_scene_with_report, Coverage, RansacConfig};
use remaster_core::synthgen::{generate_scene, CameraPath, Pattern, SceneSpec, Shape, SpriteSpec};
use remaster_core::{target_dimensions, Affine2D, RgbImage, TargetSpec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn classical(workers: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::new("memory", "memory");
    cfg.masker = Backend::Classical;
    cfg.outpainter = Backend::Classical;
    cfg.workers = workers;
    cfg
}

const SMALL_EPISODE: EpisodeShape = EpisodeShape {
    width: 160,
    height: 120,
    scenes: (2, 3),
    scene_len: (16, 30),
    max_step: 8,
    max_sprites: 2,
};

fn source_preservation() -> Outcome {
    let mut frames_checked = 0;
    for seed in 0..4 {
        let (frames, _, _) = random_episode(1000 + seed, SMALL_EPISODE);
        let out = expand_frames(&frames, &classical(2)).map_err(|e| e.to_string())?;
        if out.frames.len() != frames.len() {
            return Err(format!(
                "episode {seed}: {} frames in, {} out",
                frames.len(),
                out.frames.len()
            ));
        }
        let margins = TargetSpec::WIDESCREEN.margins(160, 120).unwrap();
        for (f, o) in frames.iter().zip(&out.frames) {
            let rect = remaster_core::PixelRect::new(margins.left as i32, 0, 160, 120);
            if o.crop(rect).unwrap() != f.image {
                return Err(format!("episode {seed}: frame {} source rect differs", f.index));
            }
            frames_checked += 1;
        }
    }
    Ok(format!(
        "{frames_checked} frames over 4 episodes bit-identical in the source rect"
    ))
}

fn stitching_accuracy() -> Outcome {
    let start = Instant::now();
    let (mut worst_rms, mut worst_psnr) = (0.0f64, f64::INFINITY);
    for seed in 0..3u64 {
        let camera = CameraPath::RandomWalk {
            max_dx: 20,
            max_dy: 20,
            seed: 40 + seed,
        };
        let spec = SceneSpec::textured(320, 240, 60, 500 + seed, camera).with_pattern(Pattern::NoiseTexture);
        let (frames, truth) = generate_scene(&spec).map_err(|e| e.to_string())?;
        let (canvas, _) = stitch_scene_with_report(
            &frames,
            &empty_masks(&frames),
            TargetSpec::WIDESCREEN,
            &RansacConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        worst_rms = worst_rms.max(common::rms_corner_error(&canvas, &truth));
        worst_psnr = worst_psnr.min(common::original_psnr(&canvas, &truth));
    }
    let per_scene = start.elapsed().as_secs_f64() / 3.0;
    check(
        worst_rms <= 0.5 && worst_psnr >= 40.0 && per_scene < 30.0,
        format!("3 scenes: worst RMS {worst_rms:.3e} px (<= 0.5), worst PSNR {worst_psnr:.1} dB (>= 40), {per_scene:.1} s/scene (< 30)"),
    )
}

/// Counts how often each canvas cell is submitted for generation.
struct Counting {
    hits: Mutex<HashMap<(i32, i32), u32>>,
}

impl Outpainter for Counting {
    fn outpaint(&self, request: &OutpaintRequest) -> remaster_core::Result<RgbImage> {
        let mut hits = self.hits.lock().unwrap();
        for y in 0..request.mask.height() {
            for x in 0..request.mask.width() {
                if request.mask.is_set(x, y) {
                    *hits
                        .entry((request.rect.x0 + x as i32, request.rect.y0 + y as i32))
                        .or_default() += 1;
                }
            }
        }
        classical_outpaint(request)
    }

    fn name(&self) -> &'static str {
        "counting"
    }
}

fn exactly_once() -> Outcome {
    let rotating: Vec<Affine2D> = (0..12)
        .map(|i| {
            let r = Affine2D::rotation_about(0.01 * i as f64, 80.0, 60.0);
            remaster_core::compose(&r, &Affine2D::translation(3.0 * i as f64, 0.5 * i as f64))
        })
        .collect();
    let sprite = SpriteSpec {
        shape: Shape::Circle { radius: 10.0 },
        color: [20, 240, 40],
        start: (40.0, 50.0),
        velocity: (2.0, 0.5),
    };
    let scenes = [
        SceneSpec::textured(160, 120, 1, 1, CameraPath::Static),
        SceneSpec::textured(160, 120, 20, 2, CameraPath::Pan { dx: 6.0, dy: 0.0 }),
        SceneSpec::textured(160, 120, 20, 3, CameraPath::Pan { dx: -4.0, dy: 2.0 }).with_sprite(sprite),
        SceneSpec::textured(
            160,
            120,
            25,
            4,
            CameraPath::RandomWalk {
                max_dx: 12,
                max_dy: 6,
                seed: 9,
            },
        ),
        SceneSpec::textured(160, 120, 12, 5, CameraPath::Transforms(rotating)),
    ];
    let mut total = 0;
    for (k, spec) in scenes.iter().enumerate() {
        let (frames, _) = generate_scene(spec).map_err(|e| e.to_string())?;
        let (mut canvas, _) = stitch_scene_with_report(
            &frames,
            &empty_masks(&frames),
            TargetSpec::WIDESCREEN,
            &RansacConfig::default(),
        )
        .map_err(|e| format!("scene {k}: {e}"))?;
        let counting = Counting {
            hits: Mutex::new(HashMap::new()),
        };
        let generated = outpaint_scene(&mut canvas, TargetSpec::WIDESCREEN, &counting, DEFAULT_PROMPT)
            .map_err(|e| format!("scene {k}: {e}"))?;
        let hits = counting.hits.into_inner().unwrap();
        let max = hits.values().copied().max().unwrap_or(0);
        if max > 1 {
            return Err(format!("scene {k}: a cell was submitted {max} times"));
        }
        if hits.len() != generated || generated != canvas.count(Coverage::Generated) {
            return Err(format!(
                "scene {k}: {} cells submitted, {generated} committed, {} marked generated",
                hits.len(),
                canvas.count(Coverage::Generated)
            ));
        }
        for i in 0..frames.len() {
            let again = select_outpaint_region(&canvas, i, TargetSpec::WIDESCREEN).map_err(|e| e.to_string())?;
            if !again.is_empty() {
                return Err(format!(
                    "scene {k}: frame {i} still selects {} cells",
                    again.mask.count()
                ));
            }
        }
        reconstruct_scene(&canvas, &frames).map_err(|e| format!("scene {k}: {e}"))?;
        total += generated;
    }
    Ok(format!(
        "5 scenes, {total} generated cells each submitted once, reselection empty"
    ))
}

fn ransac_robustness() -> Outcome {
    let (w, h) = (320.0, 240.0);
    let corners = [(0.0, 0.0), (w - 1.0, 0.0), (0.0, h - 1.0), (w - 1.0, h - 1.0)];
    let mut worst = 0.0f64;
    let mut passed = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: f64 = rng.random_range(-0.2..0.2);
        let s: f64 = rng.random_range(0.9..1.1);
        let shear: f64 = rng.random_range(-0.05..0.05);
        let planted = Affine2D::new(
            s * theta.cos(),
            -s * theta.sin() + shear,
            s * theta.sin(),
            s * theta.cos(),
            rng.random_range(-30.0..30.0),
            rng.random_range(-30.0..30.0),
        );
        let n = 100;
        let n_out = 40;
        let mut src = Vec::with_capacity(n);
        let mut dst = Vec::with_capacity(n);
        for k in 0..n {
            let p = (rng.random_range(0.0..w), rng.random_range(0.0..h));
            src.push(p);
            dst.push(if k < n_out {
                (rng.random_range(-40.0..w + 40.0), rng.random_range(-40.0..h + 40.0))
            } else {
                planted.apply(p.0, p.1)
            });
        }
        let fit = match estimate_affine_ransac(&src, &dst, &RansacConfig::default().with_seed(seed)) {
            Ok(f) => f,
            Err(e) => return Err(format!("seed {seed}: {e}")),
        };
        let err = corners
            .iter()
            .map(|&(x, y)| {
                let (a, b) = fit.transform.apply(x, y);
                let (c, d) = planted.apply(x, y);
                ((a - c).powi(2) + (b - d).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        worst = worst.max(err);
        passed += (err <= 0.1) as usize;
    }
    check(
        passed == 100,
        format!("{passed}/100 seeds within 0.1 px at 40% outliers, worst corner error {worst:.2e} px"),
    )
}

fn scene_detection() -> Outcome {
    let shape = EpisodeShape {
        width: 160,
        height: 120,
        scenes: (2, 5),
        scene_len: (15, 40),
        max_step: 20,
        max_sprites: 3,
    };
    let cfg = SceneDetectConfig::default();
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for seed in 0..20 {
        let (frames, truth, _) = random_episode(7000 + seed, shape);
        let found = detect_cuts(&frames, &cfg).map_err(|e| e.to_string())?;
        tp += found.iter().filter(|c| truth.cut_indices.contains(c)).count();
        fp += found.iter().filter(|c| !truth.cut_indices.contains(c)).count();
        fneg += truth.cut_indices.iter().filter(|c| !found.contains(c)).count();
    }
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    let recall = tp as f64 / (tp + fneg).max(1) as f64;
    check(
        fp == 0 && fneg == 0,
        format!("20 episodes, {tp} planted cuts: precision {precision:.3}, recall {recall:.3}"),
    )
}

fn aspect_geometry() -> Outcome {
    let table = [
        ((640, 480), TargetSpec::new(16, 9).unwrap(), (854, 480)),
        ((1440, 1080), TargetSpec::new(16, 9).unwrap(), (1920, 1080)),
        ((640, 480), TargetSpec::new(4, 3).unwrap(), (640, 480)),
    ];
    for ((w, h), spec, want) in table {
        let got = target_dimensions(w, h, spec).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("{w}x{h} at {spec}: got {got:?}, want {want:?}"));
        }
    }
    Ok("640x480@16:9 -> 854x480, 1440x1080@16:9 -> 1920x1080, 640x480@4:3 -> 640x480".into())
}

fn temporal_coherence() -> Outcome {
    let mut checked = 0;
    for (seed, pattern) in [
        (21, Pattern::NoiseTexture),
        (22, Pattern::Checkerboard),
        (23, Pattern::Gradient),
    ] {
        let spec = SceneSpec::textured(320, 240, 30, seed, CameraPath::Static).with_pattern(pattern);
        let (frames, _) = generate_scene(&spec).map_err(|e| e.to_string())?;
        let out = expand_frames(&frames, &classical(1)).map_err(|e| e.to_string())?;
        if let Some(i) = out.frames.iter().position(|f| *f != out.frames[0]) {
            return Err(format!("{pattern:?}: output frame {i} differs from frame 0"));
        }
        checked += out.frames.len();
    }
    Ok(format!(
        "3 static scenes, {checked} output frames, each scene bit-identical throughout"
    ))
}

fn determinism() -> Outcome {
    let mut frames_compared = 0;
    for seed in 0..2 {
        let (frames, _, _) = random_episode(3000 + seed, SMALL_EPISODE);
        let one = expand_frames(&frames, &classical(1)).map_err(|e| e.to_string())?;
        let four = expand_frames(&frames, &classical(4)).map_err(|e| e.to_string())?;
        if one.frames != four.frames {
            return Err(format!("episode {seed}: outputs differ between 1 and 4 workers"));
        }
        frames_compared += one.frames.len();
    }
    Ok(format!("{frames_compared} frames bit-identical at 1 and 4 workers"))
}

fn runtime() -> Outcome {
    let specs_shape = EpisodeShape {
        width: 320,
        height: 240,
        scenes: (3, 3),
        scene_len: (40, 40),
        max_step: 12,
        max_sprites: 2,
    };
    let (frames, _, _) = random_episode(99, specs_shape);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("input");
    let images: Vec<RgbImage> = frames.iter().map(|f| f.image.clone()).collect();
    io::write_png_dir(&images, &input).map_err(|e| e.to_string())?;
    let mut cfg = classical(1);
    cfg.input = input;
    cfg.output = tmp.path().join("output");
    let start = Instant::now();
    let manifest = expand_video(&cfg).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let written = io::read_png_dir(&cfg.output).map_err(|e| e.to_string())?;
    let dims_ok = written.iter().all(|f| f.dims() == (428, 240));
    check(
        secs < 60.0 && written.len() == 120 && dims_ok,
        format!(
            "120 frames 320x240 -> {} frames 428x240, {} scenes, {secs:.1} s (< 60)",
            written.len(),
            manifest.scenes.len()
        ),
    )
}

fn run(name: &str, f: fn() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  {name}: {detail}");
            false
        }
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("source preservation", source_preservation),
        ("stitching accuracy", stitching_accuracy),
        ("exactly-once generation", exactly_once),
        ("RANSAC robustness", ransac_robustness),
        ("scene detection", scene_detection),
        ("aspect geometry", aspect_geometry),
        ("temporal coherence", temporal_coherence),
        ("determinism and parallelism", determinism),
        ("desk-scale runtime", runtime),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        if !run(name, f) {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
