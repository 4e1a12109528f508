use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use planenav_core::clustering::{segment_planes, ClusteringConfig};
use planenav_core::geometry::PointCloud;
use planenav_core::sim::{compute_metrics, run_scenario, ControllerMode, Scenario};
use planenav_core::Error;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "planenav", version, about = "Plane-constrained NMPC navigation: scenario runner and plane segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write trace, metrics and plot data.
    Run {
        /// Scenario TOML file.
        #[arg(env = "PLANENAV_SCENARIO")]
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Replaces the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the controller mode: adaptive, fixed or apf.
        #[arg(long)]
        mode: Option<ControllerMode>,
    },
    /// Segment a point cloud CSV (`x,y,z` header) into planes.
    Segment {
        cloud: PathBuf,
        /// Clustering TOML file; defaults apply to missing keys.
        #[arg(long, env = "PLANENAV_CLUSTERING_CONFIG")]
        config: Option<PathBuf>,
        /// Segmentation JSON; timing goes to a `.timing.json` sidecar.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok = 0,
    Io = 1,
    Config = 2,
    Collision = 3,
    SolverFailure = 4,
    InsufficientPoints = 5,
}

struct Failure {
    status: Status,
    message: String,
}

impl Failure {
    fn new(status: Status, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(Status::Io, format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidConfig(_) => Status::Config,
            Error::EmptyInput(_) | Error::InsufficientPoints { .. } | Error::InvalidClusterCount { .. } => {
                Status::InsufficientPoints
            }
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => Status::Io,
            Error::InvalidPlane(..) | Error::DegenerateGeometry(_) | Error::LassoNotConverged { .. } | Error::NonFinite(_) => {
                Status::SolverFailure
            }
        };
        Self::new(status, e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { scenario, out, seed, mode } => cmd_run(&scenario, &out, seed, mode),
        Command::Segment { cloud, config, out } => cmd_segment(&cloud, config.as_deref(), &out),
    };
    match outcome {
        Ok(status) => ExitCode::from(status as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.status as u8)
        }
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    toml::from_str(&text).map_err(|e| Failure::new(Status::Config, format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

#[derive(Serialize)]
struct RunTimingSummary<'a> {
    mean_control_s: f64,
    max_control_s: f64,
    mean_segmentation_s: f64,
    control_s: &'a [f64],
    segmentation_s: &'a [f64],
}

fn cmd_run(path: &Path, out: &Path, seed: Option<u64>, mode: Option<ControllerMode>) -> Result<Status, Failure> {
    let mut scenario: Scenario = read_toml(path)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    if let Some(mode) = mode {
        scenario.mode = mode;
    }
    scenario.validate()?;
    let env = scenario.build_environment()?;

    let trace = run_scenario(&scenario)?;
    let metrics = compute_metrics(&trace, &env, scenario.run.collision_distance)?;

    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let trace_path = out.join("trace.csv");
    trace.write_csv(create(&trace_path)?)?;
    let plot_path = out.join("plot.csv");
    trace.write_plot_csv(create(&plot_path)?)?;
    trace.write_planes_json(create(&out.join("planes.json"))?)?;
    write_json(&out.join("metrics.json"), &metrics)?;
    let t = &trace.timing;
    write_json(
        &out.join("timing.json"),
        &RunTimingSummary {
            mean_control_s: t.mean_control(),
            max_control_s: t.max_control(),
            mean_segmentation_s: t.mean_segmentation(),
            control_s: &t.control,
            segmentation_s: &t.segmentation,
        },
    )?;

    log::info!(
        "{}: {} ticks, waypoint MAE {:.3} m, min distance {:?}",
        scenario.name,
        metrics.ticks,
        metrics.waypoint_mae,
        metrics.min_distance
    );
    if metrics.collision {
        eprintln!("collision: minimum distance {:?} m", metrics.min_distance);
        return Ok(Status::Collision);
    }
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct SegmentTiming {
    points: usize,
    seconds: f64,
}

fn cmd_segment(cloud_path: &Path, config: Option<&Path>, out: &Path) -> Result<Status, Failure> {
    let config: ClusteringConfig = match config {
        Some(p) => read_toml(p)?,
        None => ClusteringConfig::default(),
    };
    config.validate()?;
    let file = File::open(cloud_path).map_err(|e| Failure::io(cloud_path, e))?;
    let cloud = PointCloud::read_csv(file)?;

    let started = Instant::now();
    let result = segment_planes(&cloud, &config)?;
    let seconds = started.elapsed().as_secs_f64();

    write_json(out, &result)?;
    let mut sidecar = out.as_os_str().to_owned();
    sidecar.push(".timing.json");
    write_json(
        Path::new(&sidecar),
        &SegmentTiming {
            points: cloud.len(),
            seconds,
        },
    )?;
    Ok(Status::Ok)
}
