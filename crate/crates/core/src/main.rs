use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use lidarplan::harness::metrics::{bench_latency, eval_trace};
use lidarplan::harness::{run_closed_loop, run_to_dir, Mode, RunOptions, Trace};
use lidarplan::lidar::read_fixture;
use lidarplan::perception::detect_frame;
use lidarplan::world::{load_scenario, load_scenario_file};

#[derive(Parser)]
#[command(name = "lidarplan", version, about = "LiDAR perception and local planning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write a trace directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "lidar")]
        mode: Mode,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario duration, seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Also write every point cloud under `<out>/clouds`.
        #[arg(long)]
        dump_clouds: bool,
    },
    /// Perception accuracy of a lidar-mode trace.
    Eval {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 20.0)]
        range: f64,
        /// Only vehicles above the static speed threshold.
        #[arg(long)]
        dynamic: bool,
    },
    /// Per-stage latency of a trace.
    Bench {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Print one frame's cloud summary and detections.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        frame: u64,
    },
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            mode,
            seed,
            out,
            duration,
            dump_clouds,
        } => {
            let mut config = load_scenario_file(&scenario)?;
            if let Some(d) = duration {
                if !(d > 0.0) {
                    bail!("--duration must be > 0");
                }
                config.duration = d;
            }
            let options = RunOptions {
                seed,
                cloud_dir: dump_clouds.then(|| out.join("clouds")),
                ..Default::default()
            };
            let mut report = run_to_dir(&config, mode, &options, &out)?;
            // The per-tick series stays in report.json.
            report.following_distance_series.clear();
            println!("{}", json(&report)?);
        }
        Command::Eval { trace, range, dynamic } => {
            if !(range > 0.0) {
                bail!("--range must be > 0");
            }
            let t = Trace::read(&trace)?;
            println!("{}", json(&eval_trace(&t, range, dynamic)?)?);
        }
        Command::Bench { trace } => {
            if !trace.is_dir() {
                bail!("{} is not a trace directory", trace.display());
            }
            let rows = Trace::read_timing(&trace).with_context(|| format!("reading {}", trace.display()))?;
            println!("{}", json(&bench_latency(&rows))?);
        }
        Command::Replay { trace, frame } => {
            let t = Trace::read(&trace)?;
            if frame >= t.meta.ticks {
                bail!("frame {frame} is outside the run ({} ticks)", t.meta.ticks);
            }
            if t.meta.mode != Mode::Lidar {
                bail!("replay needs a lidar-mode trace");
            }
            let mut config = load_scenario(&t.scenario_text)?;
            config.seed = t.meta.seed;
            let stem = format!("frame_{frame:06}");
            let clouds = trace.join("clouds");
            let (cloud, detections) = if clouds.join(format!("{stem}.bin")).exists() {
                let (cloud, _) = read_fixture(&clouds, &stem)?;
                // Detection from a dumped cloud uses a fresh RNG, so it can
                // differ slightly from the recorded frame.
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(config.seed);
                let d = detect_frame(&cloud, &config.perception, &mut rng);
                (cloud, d)
            } else {
                let options = RunOptions {
                    max_ticks: Some(frame + 1),
                    capture_frame: Some(frame),
                    ..Default::default()
                };
                let c = run_closed_loop(&config, Mode::Lidar, &options)?
                    .captured
                    .context("frame was not captured")?;
                (c.cloud, c.detections)
            };
            let recorded = t.detections.iter().find(|d| d.frame_id == frame);
            let out = serde_json::json!({
                "frame": frame,
                "points": cloud.len(),
                "counts": detections.counts,
                "detections": detections.detections,
                "recorded_detections": recorded.map(|d| &d.detections),
                "tracks": t.tracks.iter().filter(|r| r.frame_id == frame).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
