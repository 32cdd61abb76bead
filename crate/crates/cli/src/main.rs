use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use panotrack_core::behaviour::BehaviourConfig;
use panotrack_core::formats::overtakes::format_overtakes;
use panotrack_core::pipeline::{self, EvalTables, FrameRange, PipelineConfig};
use panotrack_core::Result;

/// Detection fusion, tracking and overtake detection for 360° video.
#[derive(Debug, Parser)]
#[command(name = "panotrack", version)]
struct Cli {
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detect in every sub-view and fuse into panorama detections.
    Fuse(Common),
    /// Track fused detections; writes MOT text.
    Track(Common),
    /// Find overtakes in a MOT track file.
    Overtakes(Common),
    /// Score tracks, overtakes and detections against ground truth.
    Eval(Common),
    /// Coverage heat map and class counts of a track file.
    Report(Common),
    /// Write a scripted scene, its ground truth and a pipeline config.
    Synth(SynthArgs),
    /// Print the default configuration.
    PrintConfig(Common),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of panorama frames.
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Fused detections file.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// Output of the command: detections, tracks, overtakes, or the report
    /// directory for eval and report.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Frame range `A:B`; either end may be left open.
    #[arg(long)]
    range: Option<FrameRange>,
    /// Let tracks match detections of another category.
    #[arg(long)]
    no_category_support: bool,
    /// Treat the left and right image edges as unconnected.
    #[arg(long)]
    no_boundary_support: bool,
    /// Drop overtakes shorter than this many seconds.
    #[arg(long, value_name = "SECONDS")]
    min_overtake_duration: Option<f64>,
    /// Seed of the perfect detector.
    #[arg(long)]
    seed: Option<u64>,
    /// Write annotated frames when finding overtakes.
    #[arg(long)]
    overlay: bool,
}

#[derive(Debug, Clone, Args)]
struct SynthArgs {
    /// One of: fusion, category-swap, seam-crossing, mot, overtakes, three-overtakes.
    #[arg(long, default_value = "three-overtakes")]
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, short)]
    output: PathBuf,
    /// Also render the frames as PNG.
    #[arg(long)]
    render: bool,
    #[arg(long, value_name = "SECONDS")]
    min_overtake_duration: Option<f64>,
}

fn load_config(c: &Common, stage: Option<&Command>) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(f) = &c.frames {
        cfg.paths.frames = Some(f.clone());
    }
    if let Some(d) = &c.detections {
        cfg.paths.detections = d.clone();
    }
    if let Some(r) = c.range {
        cfg.frames = r;
    }
    if c.no_category_support {
        cfg.tracker.category_support = false;
    }
    if c.no_boundary_support {
        cfg.tracker.boundary_support = false;
    }
    if let Some(d) = c.min_overtake_duration {
        cfg.behaviour.min_duration = d;
    }
    if let Some(s) = c.seed {
        cfg.detector.seed = s;
    }
    if c.overlay {
        cfg.overlay = true;
    }
    if let Some(o) = &c.output {
        match stage {
            Some(Command::Fuse(_)) => cfg.paths.detections = o.clone(),
            Some(Command::Track(_)) => cfg.paths.tracks = o.clone(),
            Some(Command::Overtakes(_)) => cfg.paths.overtakes = o.clone(),
            Some(Command::Eval(_) | Command::Report(_)) => cfg.paths.reports = o.clone(),
            _ => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cmd = &cli.command;
    match cmd {
        Command::Fuse(c) => {
            let s = pipeline::cmd_fuse(&load_config(c, Some(cmd))?)?;
            println!(
                "fused {} frames, {} detections in {:.2} s -> {}",
                s.frames,
                s.detections,
                s.elapsed.as_secs_f64(),
                s.output.display()
            );
        }
        Command::Track(c) => {
            let s = pipeline::cmd_track(&load_config(c, Some(cmd))?)?;
            println!(
                "tracked {} frames: {} tracks, {} records, {} cross-category matches, {:.3} ms per frame -> {}",
                s.frames,
                s.tracks,
                s.records,
                s.cross_category_matches,
                s.mean_frame_time.as_secs_f64() * 1e3,
                s.output.display()
            );
        }
        Command::Overtakes(c) => {
            let s = pipeline::cmd_overtakes(&load_config(c, Some(cmd))?)?;
            print!("{}", format_overtakes(&s.records));
            eprintln!("{} overtakes -> {}", s.records.len(), s.output.display());
            if s.overlay_frames > 0 {
                eprintln!("{} overlay frames written", s.overlay_frames);
            }
        }
        Command::Eval(c) => {
            let t: EvalTables = pipeline::cmd_eval(&load_config(c, Some(cmd))?)?;
            print!("{}", t.to_text());
        }
        Command::Report(c) => {
            let cfg = load_config(c, Some(cmd))?;
            let r = pipeline::cmd_report(&cfg)?;
            print!("{}", r.counts_csv());
            eprintln!("tables written to {}", cfg.paths.reports.display());
        }
        Command::Synth(a) => {
            let script = pipeline::scenario(&a.scenario, a.seed)?;
            let behaviour = BehaviourConfig {
                min_duration: a.min_overtake_duration.unwrap_or(0.0),
                ..BehaviourConfig::default()
            };
            let s = pipeline::cmd_synth(&script, &behaviour, &a.output, a.render)?;
            println!(
                "{} frames, {} objects, {} true overtakes, {} rendered frames; config {}",
                s.frames,
                s.objects,
                s.overtakes,
                s.rendered,
                s.config.display()
            );
        }
        Command::PrintConfig(c) => {
            print!("{}", load_config(c, None)?.to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
