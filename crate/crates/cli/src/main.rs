use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use remaster_core::outpainting::DEFAULT_PROMPT;
use remaster_core::pipeline::{Backend, DEFAULT_SIDECAR_URL};
use remaster_core::scenedetect::SceneDetectConfig;
use remaster_core::{Error, TargetSpec};

mod commands;

/// Expand animated video to a wider aspect ratio, scene by scene.
#[derive(Parser, Debug)]
#[command(name = "remaster", version, about)]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG overrides.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline on a video file or PNG frame directory.
    Expand(ExpandArgs),
    /// Detect scene cuts and print the scene list.
    Scenes(ScenesArgs),
    /// Render a synthetic scene or episode with ground truth.
    Synth(SynthArgs),
    /// Stitch one scene and write its canvas and coverage images.
    StitchDebug(StitchDebugArgs),
}

#[derive(Args, Debug, Clone)]
struct DetectArgs {
    /// Mean HSV difference above which a cut is placed.
    #[arg(long, default_value_t = SceneDetectConfig::default().threshold)]
    scene_threshold: f64,

    /// Minimum frames per scene before another cut is allowed.
    #[arg(long, default_value_t = SceneDetectConfig::default().min_scene_len)]
    min_scene_len: usize,
}

impl DetectArgs {
    fn config(&self) -> SceneDetectConfig {
        SceneDetectConfig {
            threshold: self.scene_threshold,
            min_scene_len: self.min_scene_len,
        }
    }
}

#[derive(Args, Debug)]
struct ExpandArgs {
    /// Input video file, or a directory of numbered PNG frames.
    #[arg(long)]
    input: PathBuf,

    /// Output video file, or a directory (no extension) for PNG frames.
    #[arg(long)]
    output: PathBuf,

    /// Target aspect ratio as W:H.
    #[arg(long, default_value = "16:9")]
    aspect: TargetSpec,

    #[command(flatten)]
    detect: DetectArgs,

    #[arg(long, default_value = "classical", value_parser = parse_backend)]
    masker: Backend,

    #[arg(long, default_value = "classical", value_parser = parse_backend)]
    outpainter: Backend,

    /// Base URL of the ML sidecar for remote backends.
    #[arg(long, default_value = DEFAULT_SIDECAR_URL)]
    sidecar_url: String,

    /// Prompt passed to the outpainter.
    #[arg(long, default_value = DEFAULT_PROMPT)]
    prompt: String,

    /// Scenes processed in parallel.
    #[arg(long, default_value_t = 1)]
    workers: usize,

    /// Directory for per-scene intermediate frames and manifests.
    #[arg(long)]
    work_dir: Option<PathBuf>,

    /// Also write each scene's canvas and coverage map to the work dir.
    #[arg(long)]
    dump_canvas: bool,
}

#[derive(Args, Debug)]
struct ScenesArgs {
    #[arg(long)]
    input: PathBuf,

    #[command(flatten)]
    detect: DetectArgs,

    /// Print JSON instead of one tab-separated line per scene.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// JSON scene spec, or {"scenes": [spec, ...]} for an episode.
    #[arg(long)]
    spec: PathBuf,

    /// Output directory for frames and ground truth.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StitchDebugArgs {
    #[arg(long)]
    input: PathBuf,

    /// Scene number (0-based) in detection order.
    #[arg(long, default_value_t = 0)]
    scene: usize,

    #[arg(long, default_value = "16:9")]
    aspect: TargetSpec,

    #[command(flatten)]
    detect: DetectArgs,

    /// Output directory for canvas.png, coverage.png and transforms.json.
    #[arg(long)]
    out: PathBuf,
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help / --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .parse_env("RUST_LOG")
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Expand(args) => commands::expand(args),
        Command::Scenes(args) => commands::scenes(args),
        Command::Synth(args) => commands::synth(args),
        Command::StitchDebug(args) => commands::stitch_debug(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
