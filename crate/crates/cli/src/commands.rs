use std::fs;
use std::path::Path;

use remaster_core::codec;
use remaster_core::masking::{mask_scene, ClassicalMasker, DEFAULT_DELTA_THRESHOLD};
use remaster_core::pipeline::{decode_video, expand_video, io, manifest_path, PipelineConfig};
use remaster_core::scenedetect::detect_scenes;
use remaster_core::stitching::{coarse_alignment, stitch_scene_with_report, Coverage, RansacConfig};
use remaster_core::synthgen::{generate_episode, generate_scene, SceneGroundTruth, SceneSpec, Transition};
use remaster_core::{Error, Frame, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{ExpandArgs, ScenesArgs, StitchDebugArgs, SynthArgs};

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn expand(args: ExpandArgs) -> Result<()> {
    let mut cfg = PipelineConfig::new(args.input, args.output);
    cfg.target = args.aspect;
    cfg.scene = args.detect.config();
    cfg.masker = args.masker;
    cfg.outpainter = args.outpainter;
    cfg.sidecar_url = args.sidecar_url;
    cfg.prompt = args.prompt;
    cfg.workers = args.workers;
    cfg.work_dir = args.work_dir;
    cfg.dump_canvas = args.dump_canvas;
    let manifest = expand_video(&cfg)?;
    let frames: usize = manifest
        .scenes
        .iter()
        .map(|s| s.frame_range[1] - s.frame_range[0])
        .sum();
    let fallbacks = manifest.scenes.iter().filter(|s| s.fallback).count();
    let generated: usize = manifest.scenes.iter().map(|s| s.generated_pixels).sum();
    eprintln!(
        "{frames} frames in {} scenes ({fallbacks} pillarboxed), {generated} pixels generated; manifest {}",
        manifest.scenes.len(),
        manifest_path(&cfg.output).display()
    );
    Ok(())
}

pub fn scenes(args: ScenesArgs) -> Result<()> {
    let cfg = args.detect.config();
    cfg.validate()?;
    let video = decode_video(&args.input)?;
    let clips = detect_scenes(&video.frames, &cfg)?;
    if args.json {
        let list: Vec<_> = clips
            .iter()
            .enumerate()
            .map(|(id, c)| json!({ "id": id, "start": c.start, "end": c.end }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&list)?);
    } else {
        for (id, c) in clips.iter().enumerate() {
            println!("{id}\t{}\t{}", c.start, c.end);
        }
    }
    Ok(())
}

/// A single scene spec or a list of them separated by hard cuts.
#[derive(Deserialize)]
#[serde(untagged)]
enum SynthSpec {
    Episode { scenes: Vec<SceneSpec> },
    Scene(SceneSpec),
}

#[derive(Serialize)]
struct SceneTruthFile<'a> {
    frame_range: [usize; 2],
    background: String,
    /// Frame -> background affine coefficients `[a, b, c, d, tx, ty]`.
    true_transforms: Vec<[f64; 6]>,
    spec: &'a SceneSpec,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::Io {
        path: args.spec.clone(),
        source: e,
    })?;
    let spec: SynthSpec =
        serde_json::from_str(&text).map_err(|e| Error::Spec(format!("{}: {e}", args.spec.display())))?;
    let specs = match spec {
        SynthSpec::Scene(s) => vec![s],
        SynthSpec::Episode { scenes } => scenes,
    };
    let (frames, scenes, cuts): (Vec<Frame>, Vec<SceneGroundTruth>, Vec<usize>) = if specs.len() == 1 {
        let (f, t) = generate_scene(&specs[0])?;
        (f, vec![t], Vec::new())
    } else {
        let (f, t) = generate_episode(&specs, Transition::HardCut)?;
        (f, t.scenes, t.cut_indices)
    };

    let frames_dir = args.out.join("frames");
    let masks_dir = args.out.join("masks");
    create_dir(&masks_dir)?;
    let images: Vec<_> = frames.iter().map(|f| f.image.clone()).collect();
    io::write_png_dir(&images, &frames_dir)?;

    let mut scene_files = Vec::new();
    let mut start = 0;
    for (k, (truth, spec)) in scenes.iter().zip(&specs).enumerate() {
        let background = format!("background_{k:04}.png");
        io::write_png(&truth.true_background, &args.out.join(&background))?;
        for (i, m) in truth.true_sprite_masks.iter().enumerate() {
            let path = masks_dir.join(io::png_name(start + i));
            fs::write(&path, codec::encode_mask_png(m)?).map_err(|e| Error::Io { path, source: e })?;
        }
        let end = start + truth.true_transforms.len();
        scene_files.push(SceneTruthFile {
            frame_range: [start, end],
            background,
            true_transforms: truth.true_transforms.iter().map(|t| t.coefficients()).collect(),
            spec,
        });
        start = end;
    }
    write_json(
        &args.out.join("ground_truth.json"),
        &json!({
            "frame_count": frames.len(),
            "cut_indices": cuts,
            "scenes": scene_files,
        }),
    )?;
    eprintln!(
        "{} frames, {} scenes written to {}",
        frames.len(),
        scenes.len(),
        args.out.display()
    );
    Ok(())
}

pub fn stitch_debug(args: StitchDebugArgs) -> Result<()> {
    let cfg = args.detect.config();
    cfg.validate()?;
    let video = decode_video(&args.input)?;
    let clips = detect_scenes(&video.frames, &cfg)?;
    let clip = clips
        .get(args.scene)
        .ok_or_else(|| Error::InvalidInput(format!("scene {} requested, input has {}", args.scene, clips.len())))?;
    let ransac = RansacConfig::default();
    let alignment = coarse_alignment(&clip.frames, &ransac);
    let masker = ClassicalMasker::for_scene(&clip.frames, &alignment, DEFAULT_DELTA_THRESHOLD)?;
    let masks = mask_scene(&masker, &clip.frames, &alignment)?;
    let (canvas, report) = stitch_scene_with_report(&clip.frames, &masks, args.aspect, &ransac)?;

    create_dir(&args.out)?;
    io::write_png(canvas.background(), &args.out.join("canvas.png"))?;
    io::write_png(&canvas.coverage_image(), &args.out.join("coverage.png"))?;
    write_json(
        &args.out.join("transforms.json"),
        &json!({
            "frame_range": [clip.start, clip.end],
            "canvas": [canvas.width(), canvas.height()],
            "origin_offset": canvas.origin_offset,
            "transforms": canvas.frame_transforms.iter().map(|t| t.coefficients()).collect::<Vec<_>>(),
            "pairs": report.pairs,
            "reanchored": report.reanchored,
        }),
    )?;
    println!(
        "scene {} frames {}..{}: canvas {}x{}, {} original / {} unknown cells, {} fallback pairs",
        args.scene,
        clip.start,
        clip.end,
        canvas.width(),
        canvas.height(),
        canvas.count(Coverage::Original),
        canvas.count(Coverage::Unknown),
        report.fallback_count()
    );
    Ok(())
}
