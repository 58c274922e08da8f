use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use viewsynth::metrics::{Comparison, MetricsReport};
use viewsynth::pipeline::{evaluate, run_manifest, OutputLayout, PipelineConfig, RunOptions, RunReport, Timings};
use viewsynth::synthgen::{inject_occluder, render, Scenario};

#[derive(Parser)]
#[command(name = "viewsynth", version, about = "Single-view video synthesis from a multi-camera rig")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align, select, enhance and evaluate a recording.
    Run(RunArgs),
    /// Compare the stability metrics of two frame directories.
    Evaluate(EvaluateArgs),
    /// Render a synthetic rig recording with ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores; overrides the config file.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path).with_context(|| format!("config stage: {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Recording manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Disable field centering.
    #[arg(long)]
    no_center: bool,
    /// Disable filling of empty regions.
    #[arg(long)]
    no_fill: bool,
    /// Disable alignment; selected views are used unwarped.
    #[arg(long)]
    no_align: bool,
    /// Write misalignment, occlusion and provenance traces under debug/.
    #[arg(long)]
    dump_debug: bool,
    /// Print the report as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// First frame directory.
    a: PathBuf,
    /// Second frame directory.
    b: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Stationary rig, no occluders.
    Static,
    /// One rig move halfway through.
    Moving,
    /// Stationary rig with a disc covering 60% of camera 2's field for a while.
    Occluded,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for frames, manifest and ground truth.
    #[arg(long)]
    out: PathBuf,
    /// Scenario file (TOML); replaces the preset.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "static")]
    preset: Preset,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frame width for presets.
    #[arg(long, default_value_t = 640)]
    width: u32,
    /// Frame height for presets.
    #[arg(long, default_value_t = 480)]
    height: u32,
    /// Length in seconds for presets.
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
}

fn preset(args: &SynthArgs) -> Scenario {
    let fps = args.fps;
    let default_seconds = match args.preset {
        Preset::Static | Preset::Occluded => 120.0,
        Preset::Moving => 480.0,
    };
    let frames = ((args.seconds.unwrap_or(default_seconds) * fps).round() as usize).max(1);
    let base = Scenario::new(args.width, args.height, fps, frames);
    match args.preset {
        Preset::Static => base,
        Preset::Moving => base.with_move(frames / 2),
        Preset::Occluded => inject_occluder(&base, 1, 0.6, (frames / 4, frames / 2)),
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let scenario = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::from_toml(&text)?
        }
        None => preset(args),
    };
    let (manifest, truth) = render(&scenario, args.seed, &args.out)?;
    std::fs::write(args.out.join("scenario.toml"), scenario.to_toml())?;
    println!("manifest: {}", manifest.display());
    println!("frames: {} per camera, {} cameras", truth.frame_count, truth.camera_ids.len());
    println!("moves: {:?}", truth.moves);
    Ok(())
}

fn format_metrics(out: &mut String, label: &str, m: &MetricsReport) {
    let speed = m.avspeed.map_or("n/a".to_string(), |v| format!("{v:.4} px"));
    let _ = writeln!(out, "{label}: ITF {:.3} dB, AvSpeed {speed}, {} frames", m.itf_db, m.frames_evaluated);
}

fn format_report(report: &RunReport, timings: Option<&Timings>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} frames at {} fps, {}x{}, cameras {} (reference {})",
        report.frame_count,
        report.fps,
        report.width,
        report.height,
        report.camera_ids.join(","),
        report.reference
    );
    if let Some(timings) = timings {
        let _ = writeln!(out, "\nstage       seconds");
        for (stage, secs) in &timings.stages {
            let _ = writeln!(out, "{stage:<10} {secs:>8.2}");
        }
    }
    let _ = writeln!(out, "\ninitial calibration: frame {}", report.initial_calibration);
    if report.events.is_empty() {
        let _ = writeln!(out, "no movement events");
    } else {
        let _ = writeln!(out, "\n   t_mov    t_hom  late");
        for e in &report.events {
            let hom = e.t_hom.map_or("-".to_string(), |t| t.to_string());
            let _ = writeln!(out, "{:>8} {:>8}  {}", e.t_mov, hom, if e.below_design_rate { "yes" } else { "no" });
        }
    }
    let _ = writeln!(out, "\n   start      end  atlas  stale");
    for s in &report.segments {
        let _ = writeln!(out, "{:>8} {:>8} {:>6}  {}", s.start, s.end, s.atlas_id, s.stale);
    }
    let _ = writeln!(out, "\ncamera switches: {}", report.switch_events.len());
    let p = &report.provenance;
    let _ = writeln!(
        out,
        "pixels: {} selected, {} cross-view, {} temporal, {} empty ({} after frame 1)",
        p.selected, p.cross_view, p.temporal, p.none, p.none_after_first
    );
    match &report.metrics {
        Some(m) => format_metrics(&mut out, "output", m),
        None => {
            let _ = writeln!(out, "output: too few frames for metrics");
        }
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn run(args: &RunArgs) -> Result<()> {
    let mut config = args.common.load()?;
    config.centering &= !args.no_center;
    config.filling &= !args.no_fill;
    config.align &= !args.no_align;
    let options = RunOptions {
        dump_debug: args.dump_debug,
    };
    let report = run_manifest(&args.manifest, &config, &args.out, options)?;
    if args.json {
        println!("{}", report.to_json());
    } else {
        let timings = std::fs::read_to_string(OutputLayout::new(&args.out).timings())
            .ok()
            .and_then(|t| serde_json::from_str::<Timings>(&t).ok());
        print!("{}", format_report(&report, timings.as_ref()));
    }
    Ok(())
}

fn format_comparison(c: &Comparison, a: &Path, b: &Path) -> String {
    let mut out = String::new();
    format_metrics(&mut out, &a.display().to_string(), &c.a);
    format_metrics(&mut out, &b.display().to_string(), &c.b);
    let speed = c.avspeed_ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"));
    let _ = writeln!(out, "ITF ratio {:.4}, AvSpeed ratio {speed}", c.itf_ratio);
    out
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let config = args.common.load()?;
    let comparison = evaluate(&args.a, &args.b, &config)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&comparison)?);
    } else {
        print!("{}", format_comparison(&comparison, &args.a, &args.b));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Synth(args) => synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
