//! Frame sources and sinks: numbered PNG directories and, at the edges, an
//! external `ffmpeg`/`ffprobe` subprocess for container video.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use crate::codec;
use crate::error::{Error, Result};
use crate::model::{Frame, RgbImage};

/// Frame rate used when the input carries none (PNG directories).
pub const DEFAULT_FPS: &str = "24";

const INSTALL_HINT: &str =
    "install ffmpeg (e.g. `apt install ffmpeg` or `brew install ffmpeg`), or pass a directory of numbered PNG frames";

#[derive(Clone, Debug, PartialEq)]
pub struct VideoMeta {
    /// Frame rate as ffmpeg prints it, e.g. `24000/1001`.
    pub fps: String,
    /// Container to copy an audio stream from when encoding.
    pub audio_source: Option<PathBuf>,
}

#[derive(Debug)]
pub struct DecodedVideo {
    pub frames: Vec<Frame>,
    pub meta: VideoMeta,
}

/// True when `path` names a PNG directory rather than a container file.
pub fn is_frame_directory(path: &Path) -> bool {
    path.is_dir() || path.extension().is_none()
}

pub fn decode_video(path: &Path) -> Result<DecodedVideo> {
    if !path.exists() {
        return Err(Error::InvalidInput(format!("input {} does not exist", path.display())));
    }
    if path.is_dir() {
        Ok(DecodedVideo {
            frames: read_png_dir(path)?,
            meta: VideoMeta {
                fps: DEFAULT_FPS.into(),
                audio_source: None,
            },
        })
    } else {
        decode_with_ffmpeg(path)
    }
}

pub fn encode_video(frames: &[RgbImage], meta: &VideoMeta, path: &Path) -> Result<()> {
    if is_frame_directory(path) {
        write_png_dir(frames, path)
    } else {
        encode_with_ffmpeg(frames, meta, path)
    }
}

/// Numeric value of the last run of digits in a file stem.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Reads `*.png` files of `dir` ordered by the number in their names.
pub fn read_png_dir(dir: &Path) -> Result<Vec<Frame>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        let n = frame_number(&path)
            .ok_or_else(|| Error::InvalidInput(format!("frame file {} has no frame number", path.display())))?;
        numbered.push((n, path));
    }
    if numbered.is_empty() {
        return Err(Error::InvalidInput(format!("no PNG frames in {}", dir.display())));
    }
    numbered.sort();
    if let Some(w) = numbered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput(format!(
            "{} and {} share frame number {}",
            w[0].1.display(),
            w[1].1.display(),
            w[0].0
        )));
    }
    let mut frames = Vec::with_capacity(numbered.len());
    for (i, (_, path)) in numbered.iter().enumerate() {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let image =
            codec::decode_rgb_png(&bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if let Some(first) = frames.first().map(Frame::dims) {
            if image.dims() != first {
                return Err(Error::InvalidInput(format!(
                    "{} is {}x{}, earlier frames are {}x{}",
                    path.display(),
                    image.width(),
                    image.height(),
                    first.0,
                    first.1
                )));
            }
        }
        frames.push(Frame::new(i, image));
    }
    Ok(frames)
}

pub fn png_name(index: usize) -> String {
    format!("frame_{index:06}.png")
}

pub fn write_png(img: &RgbImage, path: &Path) -> Result<()> {
    fs::write(path, codec::encode_rgb_png(img)?).map_err(|e| Error::io(path, e))
}

/// Writes `frames` as `frame_000000.png`, `frame_000001.png`, ... into `dir`.
pub fn write_png_dir(frames: &[RgbImage], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, img) in frames.iter().enumerate() {
        write_png(img, &dir.join(png_name(i)))?;
    }
    Ok(())
}

fn tool(name: &str) -> Result<Command> {
    let probe = Command::new(name)
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status();
    match probe {
        Ok(s) if s.success() => Ok(Command::new(name)),
        _ => Err(Error::Environment {
            message: format!("`{name}` is not available on PATH; {INSTALL_HINT}"),
        }),
    }
}

struct Probe {
    width: u32,
    height: u32,
    fps: String,
    has_audio: bool,
}

fn probe(path: &Path) -> Result<Probe> {
    let out = tool("ffprobe")?
        .args([
            "-v",
            "error",
            "-show_entries",
            "stream=codec_type,width,height,r_frame_rate",
            "-of",
            "json",
        ])
        .arg(path)
        .output()
        .map_err(|e| Error::Environment {
            message: format!("running ffprobe: {e}"),
        })?;
    if !out.status.success() {
        return Err(Error::InvalidInput(format!(
            "ffprobe cannot read {}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let json: serde_json::Value = serde_json::from_slice(&out.stdout)?;
    let streams = json["streams"].as_array().cloned().unwrap_or_default();
    let video = streams
        .iter()
        .find(|s| s["codec_type"] == "video")
        .ok_or_else(|| Error::InvalidInput(format!("{} has no video stream", path.display())))?;
    let dim = |k: &str| video[k].as_u64().filter(|&v| v > 0).map(|v| v as u32);
    let (Some(width), Some(height)) = (dim("width"), dim("height")) else {
        return Err(Error::InvalidInput(format!("{} has no frame size", path.display())));
    };
    Ok(Probe {
        width,
        height,
        fps: video["r_frame_rate"].as_str().unwrap_or(DEFAULT_FPS).to_string(),
        has_audio: streams.iter().any(|s| s["codec_type"] == "audio"),
    })
}

fn decode_with_ffmpeg(path: &Path) -> Result<DecodedVideo> {
    let info = probe(path)?;
    let mut child = tool("ffmpeg")?
        .args(["-v", "error", "-i"])
        .arg(path)
        .args(["-map", "0:v:0", "-f", "rawvideo", "-pix_fmt", "rgb24", "-"])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Environment {
            message: format!("spawning ffmpeg: {e}"),
        })?;
    let frame_bytes = info.width as usize * info.height as usize * 3;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut frames = Vec::new();
    loop {
        let mut buf = vec![0u8; frame_bytes];
        let mut filled = 0;
        while filled < frame_bytes {
            let n = stdout.read(&mut buf[filled..]).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled == 0 {
            break;
        }
        if filled < frame_bytes {
            return Err(Error::InvalidInput(format!(
                "{}: truncated final frame",
                path.display()
            )));
        }
        frames.push(Frame::new(
            frames.len(),
            RgbImage::from_raw(info.width, info.height, buf)?,
        ));
    }
    let out = child.wait_with_output().map_err(|e| Error::io(path, e))?;
    if !out.status.success() {
        return Err(Error::InvalidInput(format!(
            "ffmpeg cannot decode {}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    if frames.is_empty() {
        return Err(Error::InvalidInput(format!("{} contains no frames", path.display())));
    }
    Ok(DecodedVideo {
        frames,
        meta: VideoMeta {
            fps: info.fps,
            audio_source: info.has_audio.then(|| path.to_path_buf()),
        },
    })
}

fn encode_with_ffmpeg(frames: &[RgbImage], meta: &VideoMeta, path: &Path) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("nothing to encode".into()))?;
    let (w, h) = first.dims();
    let mut cmd = tool("ffmpeg")?;
    cmd.args(["-v", "error", "-y", "-f", "rawvideo", "-pix_fmt", "rgb24"])
        .args(["-s", &format!("{w}x{h}"), "-r", &meta.fps, "-i", "-"]);
    if let Some(audio) = &meta.audio_source {
        cmd.arg("-i")
            .arg(audio)
            .args(["-map", "0:v", "-map", "1:a", "-c:a", "copy"]);
    }
    // 4:2:0 chroma needs even dimensions.
    let pix_fmt = if w % 2 == 0 && h % 2 == 0 { "yuv420p" } else { "yuv444p" };
    cmd.args(["-c:v", "libx264", "-crf", "16", "-pix_fmt", pix_fmt])
        .arg(path);
    let mut child = cmd
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| Error::Environment {
            message: format!("spawning ffmpeg: {e}"),
        })?;
    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        for img in frames {
            if img.dims() != (w, h) {
                return Err(Error::InvariantViolation("output frames differ in size".into()));
            }
            stdin.write_all(img.as_raw()).map_err(|e| Error::io(path, e))?;
        }
    }
    let out = child.wait_with_output().map_err(|e| Error::io(path, e))?;
    if !out.status.success() {
        return Err(Error::InvalidInput(format!(
            "ffmpeg cannot write {}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(())
}

/// Whether both `ffmpeg` and `ffprobe` can be run.
pub fn transcoder_available() -> bool {
    tool("ffmpeg").is_ok() && tool("ffprobe").is_ok()
}
