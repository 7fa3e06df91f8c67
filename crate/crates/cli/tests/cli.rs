use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn remaster(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_remaster"))
        .args(args)
        .output()
        .expect("run remaster")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

const EPISODE: &str = r#"{
  "scenes": [
    {
      "width": 96, "height": 72, "frame_count": 20,
      "background": { "pattern": "noise-texture", "seed": 1, "palette": "warm" },
      "camera": { "pan": { "dx": 2.0, "dy": 0.0 } },
      "sprites": [
        { "shape": { "circle": { "radius": 6.0 } }, "color": [20, 220, 40], "start": [20.0, 30.0], "velocity": [1.5, 0.5] }
      ]
    },
    {
      "width": 96, "height": 72, "frame_count": 18,
      "background": { "pattern": "striped", "seed": 2, "palette": "cool" },
      "camera": "static"
    }
  ]
}"#;

/// Writes the two-scene episode and returns `(frames_dir, ground_truth)`.
fn synth_episode(dir: &Path) -> (PathBuf, Value) {
    let spec = dir.join("spec.json");
    fs::write(&spec, EPISODE).unwrap();
    let out = dir.join("synth");
    let res = remaster(&["synth", "--spec", arg(&spec), "--out", arg(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let truth: Value = serde_json::from_str(&fs::read_to_string(out.join("ground_truth.json")).unwrap()).unwrap();
    (out.join("frames"), truth)
}

#[test]
fn synth_writes_frames_masks_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, truth) = synth_episode(dir.path());
    assert_eq!(truth["frame_count"], 38);
    assert_eq!(truth["cut_indices"], serde_json::json!([20]));
    assert_eq!(fs::read_dir(&frames).unwrap().count(), 38);
    assert_eq!(fs::read_dir(dir.path().join("synth/masks")).unwrap().count(), 38);
    assert!(dir.path().join("synth/background_0001.png").exists());
    let t0 = &truth["scenes"][0]["true_transforms"];
    assert_eq!(t0.as_array().unwrap().len(), 20);
}

#[test]
fn scenes_lists_planted_cut() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, _) = synth_episode(dir.path());
    let res = remaster(&["scenes", "--input", arg(&frames)]);
    assert!(res.status.success());
    assert_eq!(String::from_utf8_lossy(&res.stdout), "0\t0\t20\n1\t20\t38\n");
    let res = remaster(&["scenes", "--input", arg(&frames), "--json"]);
    let list: Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(list[1]["start"], 20);
}

#[test]
fn expand_png_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, _) = synth_episode(dir.path());
    let output = dir.path().join("wide");
    let work = dir.path().join("work");
    let res = remaster(&[
        "expand",
        "--input",
        arg(&frames),
        "--output",
        arg(&output),
        "--aspect",
        "16:9",
        "--workers",
        "2",
        "--work-dir",
        arg(&work),
        "--dump-canvas",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_dir(&output).unwrap().count(), 38);
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("wide.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["version"], 1);
    let scenes = manifest["scenes"].as_array().unwrap();
    assert_eq!(scenes.len(), 2);
    assert_eq!(scenes[1]["frame_range"], serde_json::json!([20, 38]));
    assert!(scenes.iter().all(|s| s["fallback"] == false));
    // Static scene: canvas is exactly the target, 72 * 16 / 9 = 128 wide.
    assert_eq!(scenes[1]["canvas_width"], 128);
    assert_eq!(scenes[1]["canvas_height"], 72);
    assert!(work.join("scene_0000/canvas.png").exists());
    assert!(work.join("scene_0001/coverage.png").exists());
    assert!(work.join("scene_0001/manifest.json").exists());
}

#[test]
fn stitch_debug_writes_canvas() {
    let dir = tempfile::tempdir().unwrap();
    let (frames, _) = synth_episode(dir.path());
    let out = dir.path().join("debug");
    let res = remaster(&[
        "stitch-debug",
        "--input",
        arg(&frames),
        "--scene",
        "0",
        "--out",
        arg(&out),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(out.join("canvas.png").exists());
    let t: Value = serde_json::from_str(&fs::read_to_string(out.join("transforms.json")).unwrap()).unwrap();
    assert_eq!(t["transforms"].as_array().unwrap().len(), 20);
    let res = remaster(&[
        "stitch-debug",
        "--input",
        arg(&frames),
        "--scene",
        "5",
        "--out",
        arg(&out),
    ]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn input_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.mp4");
    let out = dir.path().join("o.mp4");
    let res = remaster(&["expand", "--input", arg(&missing), "--output", arg(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("does not exist"));

    let (frames, _) = synth_episode(dir.path());
    for bad in [["--aspect", "1:2"], ["--masker", "gpu"], ["--workers", "0"]] {
        let res = remaster(&["expand", "--input", arg(&frames), "--output", arg(&out), bad[0], bad[1]]);
        assert_eq!(res.status.code(), Some(1), "{bad:?}");
    }
    assert_eq!(remaster(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(remaster(&["--help"]).status.code(), Some(0));
}

fn have_ffmpeg() -> bool {
    ["ffmpeg", "ffprobe"].iter().all(|t| {
        Command::new(t)
            .arg("-version")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}

#[test]
fn container_without_transcoder_is_environment_error() {
    if have_ffmpeg() {
        eprintln!("ffmpeg present; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("clip.mp4");
    fs::write(&input, b"not really a video").unwrap();
    let res = remaster(&[
        "expand",
        "--input",
        arg(&input),
        "--output",
        arg(&dir.path().join("out.mp4")),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("install ffmpeg"));
}

#[test]
fn mp4_round_trip() {
    if !have_ffmpeg() {
        eprintln!("ffmpeg/ffprobe not installed; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let (frames, _) = synth_episode(dir.path());
    let mp4 = dir.path().join("in.mp4");
    let status = Command::new("ffmpeg")
        .args(["-v", "error", "-y", "-framerate", "24", "-pattern_type", "glob", "-i"])
        .arg(frames.join("*.png"))
        .args(["-c:v", "libx264", "-pix_fmt", "yuv420p"])
        .arg(&mp4)
        .status()
        .unwrap();
    assert!(status.success());
    let out = dir.path().join("out.mp4");
    let res = remaster(&["expand", "--input", arg(&mp4), "--output", arg(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let probe = Command::new("ffprobe")
        .args([
            "-v",
            "error",
            "-count_frames",
            "-show_entries",
            "stream=width,height,nb_read_frames",
            "-of",
            "csv=p=0",
        ])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(String::from_utf8_lossy(&probe.stdout).trim(), "128,72,38");
}
