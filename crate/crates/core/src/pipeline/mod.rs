//! End-to-end orchestration: decode, detect scenes, then per scene mask,
//! stitch, outpaint and resample, and finally encode.

pub mod io;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{
    mask_scene, ClassicalMasker, FallbackMasker, Masker, RemoteMasker, DEFAULT_DELTA_THRESHOLD, DEFAULT_MASK_TIMEOUT,
};
use crate::model::{Frame, RgbImage, TargetSpec};
use crate::outpainting::{
    outpaint_scene, ClassicalOutpainter, FallbackOutpainter, Outpainter, RemoteOutpainter, DEFAULT_OUTPAINT_TIMEOUT,
    DEFAULT_PROMPT,
};
use crate::remote::ClientConfig;
use crate::resample::{pillarbox, reconstruct_scene, OutputFrame};
use crate::scenedetect::{detect_scenes, SceneClip, SceneDetectConfig};
use crate::stitching::{coarse_alignment, stitch_scene_with_report, CanvasState, RansacConfig};

pub use io::{decode_video, encode_video, DecodedVideo, VideoMeta};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_SIDECAR_URL: &str = "http://127.0.0.1:8765";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Classical,
    Remote,
    RemoteFallback,
}

impl Backend {
    pub fn is_remote(self) -> bool {
        self != Backend::Classical
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Classical => "classical",
            Backend::Remote => "remote",
            Backend::RemoteFallback => "remote-fallback",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Backend::Classical),
            "remote" => Ok(Backend::Remote),
            "remote-fallback" => Ok(Backend::RemoteFallback),
            _ => Err(Error::InvalidInput(format!(
                "unknown backend {s:?} (expected classical, remote or remote-fallback)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub target: TargetSpec,
    pub scene: SceneDetectConfig,
    pub ransac: RansacConfig,
    pub masker: Backend,
    pub outpainter: Backend,
    pub sidecar_url: String,
    pub prompt: String,
    pub workers: usize,
    /// Per-scene intermediates (frames, manifest) go here when set.
    pub work_dir: Option<PathBuf>,
    /// Also write each scene's canvas and coverage image to the work dir.
    pub dump_canvas: bool,
    pub mask_threshold: u8,
}

impl PipelineConfig {
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            output: output.into(),
            target: TargetSpec::WIDESCREEN,
            scene: SceneDetectConfig::default(),
            ransac: RansacConfig::default(),
            masker: Backend::Classical,
            outpainter: Backend::Classical,
            sidecar_url: DEFAULT_SIDECAR_URL.into(),
            prompt: DEFAULT_PROMPT.into(),
            workers: 1,
            work_dir: None,
            dump_canvas: false,
            mask_threshold: DEFAULT_DELTA_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidInput("worker count must be at least 1".into()));
        }
        if (self.masker.is_remote() || self.outpainter.is_remote()) && self.sidecar_url.trim().is_empty() {
            return Err(Error::InvalidInput("remote backends need a sidecar URL".into()));
        }
        self.scene.validate()?;
        self.ransac.validate()
    }

    /// Directory for intermediates, if any are to be written.
    pub fn scene_root(&self) -> Option<PathBuf> {
        match (&self.work_dir, self.dump_canvas) {
            (Some(d), _) => Some(d.clone()),
            (None, true) => Some(suffixed(&self.output, ".work")),
            (None, false) => None,
        }
    }

    fn masker_for(&self, frames: &[Frame], alignment: &crate::stitching::CoarseAlignment) -> Result<Box<dyn Masker>> {
        let remote = || RemoteMasker::new(ClientConfig::new(&self.sidecar_url, DEFAULT_MASK_TIMEOUT));
        Ok(match self.masker {
            Backend::Classical => Box::new(ClassicalMasker::for_scene(frames, alignment, self.mask_threshold)?),
            Backend::Remote => Box::new(remote()),
            Backend::RemoteFallback => Box::new(FallbackMasker {
                primary: remote(),
                fallback: ClassicalMasker::for_scene(frames, alignment, self.mask_threshold)?,
            }),
        })
    }

    fn outpainter(&self) -> Box<dyn Outpainter> {
        let remote = || RemoteOutpainter::new(ClientConfig::new(&self.sidecar_url, DEFAULT_OUTPAINT_TIMEOUT));
        match self.outpainter {
            Backend::Classical => Box::new(ClassicalOutpainter),
            Backend::Remote => Box::new(remote()),
            Backend::RemoteFallback => Box::new(FallbackOutpainter {
                primary: remote(),
                fallback: ClassicalOutpainter,
            }),
        }
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    suffixed(output, ".manifest.json")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub mask_ms: f64,
    pub stitch_ms: f64,
    pub outpaint_ms: f64,
    pub resample_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub id: usize,
    /// Episode frame range `[start, end)`.
    pub frame_range: [usize; 2],
    /// Frame -> canvas affine coefficients `[a, b, c, d, tx, ty]`.
    pub transforms: Vec<[f64; 6]>,
    pub generated_pixels: usize,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub timings: StageTimings,
    /// Pairs registered by a fallback rather than RANSAC.
    pub registration_fallbacks: usize,
    /// The scene was pillarboxed instead of expanded.
    pub fallback: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub version: u32,
    pub input: String,
    pub scenes: Vec<SceneManifest>,
}

/// Intermediate products of a successful scene.
struct Expanded {
    canvas: CanvasState,
    frames: Vec<OutputFrame>,
    generated: usize,
    registration_fallbacks: usize,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn expand_clip(clip: &SceneClip, cfg: &PipelineConfig, timings: &mut StageTimings) -> Result<Expanded> {
    let t = Instant::now();
    let alignment = coarse_alignment(&clip.frames, &cfg.ransac);
    let masker = cfg.masker_for(&clip.frames, &alignment)?;
    let masks = mask_scene(masker.as_ref(), &clip.frames, &alignment)?;
    timings.mask_ms = ms(t);

    let t = Instant::now();
    let (mut canvas, report) = stitch_scene_with_report(&clip.frames, &masks, cfg.target, &cfg.ransac)?;
    timings.stitch_ms = ms(t);

    let t = Instant::now();
    let generated = outpaint_scene(&mut canvas, cfg.target, cfg.outpainter().as_ref(), &cfg.prompt)?;
    timings.outpaint_ms = ms(t);

    let t = Instant::now();
    let frames = reconstruct_scene(&canvas, &clip.frames)?;
    timings.resample_ms = ms(t);
    Ok(Expanded {
        canvas,
        frames,
        generated,
        registration_fallbacks: report.fallback_count(),
    })
}

/// Expands one scene. Never fails: a scene that cannot be expanded is
/// pillarboxed and the failure recorded in its manifest.
pub fn run_scene(clip: &SceneClip, id: usize, cfg: &PipelineConfig) -> (Vec<OutputFrame>, SceneManifest) {
    let mut manifest = SceneManifest {
        id,
        frame_range: [clip.start, clip.end],
        transforms: Vec::new(),
        generated_pixels: 0,
        canvas_width: 0,
        canvas_height: 0,
        timings: StageTimings::default(),
        registration_fallbacks: 0,
        fallback: false,
        error: None,
    };
    let result = if clip.frames.is_empty() {
        Err(Error::InvalidInput("empty scene".into()))
    } else {
        expand_clip(clip, cfg, &mut manifest.timings)
    };
    let frames = match result {
        Ok(done) => {
            manifest.transforms = done.canvas.frame_transforms.iter().map(|t| t.coefficients()).collect();
            manifest.generated_pixels = done.generated;
            (manifest.canvas_width, manifest.canvas_height) = done.canvas.dims();
            manifest.registration_fallbacks = done.registration_fallbacks;
            if let Some(root) = cfg.scene_root() {
                if let Err(e) = write_scene_dir(&root, &manifest, &done.frames, cfg.dump_canvas.then_some(&done.canvas))
                {
                    log::warn!("scene {id}: cannot write intermediates: {e}");
                }
            }
            done.frames
        }
        Err(e) => {
            log::warn!("scene {id} (frames {}..{}): {e}; pillarboxing", clip.start, clip.end);
            manifest.fallback = true;
            manifest.error = Some(e.to_string());
            match clip
                .frames
                .first()
                .map(|f| cfg.target.dimensions(f.width(), f.height()))
            {
                Some(Ok(dims)) => clip.frames.iter().map(|f| pillarbox(f, dims)).collect(),
                _ => Vec::new(),
            }
        }
    };
    (frames, manifest)
}

/// Work-dir path of scene `id`.
pub fn scene_dir(root: &Path, id: usize) -> PathBuf {
    root.join(format!("scene_{id:04}"))
}

fn write_scene_dir(
    root: &Path,
    manifest: &SceneManifest,
    frames: &[OutputFrame],
    canvas: Option<&CanvasState>,
) -> Result<()> {
    let dir = scene_dir(root, manifest.id);
    let images: Vec<RgbImage> = frames.iter().map(|f| f.image.clone()).collect();
    io::write_png_dir(&images, &dir)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(manifest)?).map_err(|e| Error::io(&path, e))?;
    if let Some(canvas) = canvas {
        io::write_png(canvas.background(), &dir.join("canvas.png"))?;
        io::write_png(&canvas.coverage_image(), &dir.join("coverage.png"))?;
    }
    Ok(())
}

/// Result of expanding an in-memory episode.
#[derive(Debug)]
pub struct ExpandedEpisode {
    pub frames: Vec<RgbImage>,
    pub scenes: Vec<SceneManifest>,
}

/// Runs scene detection and all scenes on a pool of `cfg.workers` threads.
/// Output order and content do not depend on the worker count.
pub fn expand_frames(frames: &[Frame], cfg: &PipelineConfig) -> Result<ExpandedEpisode> {
    cfg.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("input has no frames".into()))?;
    let (w, h) = first.dims();
    if let Some(f) = frames.iter().find(|f| f.dims() != (w, h)) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            actual: f.dims(),
        });
    }
    cfg.target.dimensions(w, h)?;
    let clips = detect_scenes(frames, &cfg.scene)?;
    log::info!("{} frames, {} scenes", frames.len(), clips.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Environment {
            message: format!("cannot start worker pool: {e}"),
        })?;
    let results: Vec<_> = pool.install(|| {
        clips
            .par_iter()
            .enumerate()
            .map(|(id, clip)| run_scene(clip, id, cfg))
            .collect()
    });
    let mut out = Vec::with_capacity(frames.len());
    let mut scenes = Vec::with_capacity(results.len());
    for (scene_frames, manifest) in results {
        if scene_frames.len() != manifest.frame_range[1] - manifest.frame_range[0] {
            return Err(Error::InvariantViolation(format!(
                "scene {} produced {} frames for range {:?}",
                manifest.id,
                scene_frames.len(),
                manifest.frame_range
            )));
        }
        out.extend(scene_frames.into_iter().map(|f| f.image));
        scenes.push(manifest);
    }
    Ok(ExpandedEpisode { frames: out, scenes })
}

/// Decodes `cfg.input`, expands it and writes `cfg.output` plus its manifest.
pub fn expand_video(cfg: &PipelineConfig) -> Result<EpisodeManifest> {
    cfg.validate()?;
    let decoded = decode_video(&cfg.input)?;
    let episode = expand_frames(&decoded.frames, cfg)?;
    encode_video(&episode.frames, &decoded.meta, &cfg.output)?;
    let manifest = EpisodeManifest {
        version: MANIFEST_VERSION,
        input: cfg.input.display().to_string(),
        scenes: episode.scenes,
    };
    let path = manifest_path(&cfg.output);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
