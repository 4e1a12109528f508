use std::time::Instant;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{segment_planes, ClusteringConfig};
use crate::dynamics::{step_euler, MavState, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::{Plane, Point3, PointCloud};
use crate::nmpc::{control_step, reference_state, AdaptiveWeights, ControllerState, NmpcConfig, WeightMode};

use super::apf::{potential_field_step, ApfGains};
use super::environment::{Environment, Panel, Waypoint};
use super::reference::ReferencePath;
use super::sensors::{level_cloud, synthetic_scan, LidarConfig, NoiseConfig, OdometryNoise};
use super::trace::{PlaneSnapshot, RunTrace, TickRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    /// NMPC with entropy-adaptive tracking weights.
    #[default]
    Adaptive,
    /// NMPC with constant maximal tracking weights.
    #[serde(alias = "fixed_weights", alias = "fixed-weights")]
    Fixed,
    /// Artificial potential field baseline.
    #[serde(alias = "potential_field", alias = "potential-field")]
    Apf,
}

impl std::str::FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "fixed" | "fixed-weights" | "fixed_weights" => Ok(Self::Fixed),
            "apf" | "potential-field" | "potential_field" => Ok(Self::Apf),
            other => Err(Error::InvalidConfig(format!("unknown controller mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    #[default]
    Corridor,
    ConfinedRoom,
    /// No panels.
    Open,
    /// Panels listed in the scenario.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub kind: EnvironmentKind,
    /// Reference speed of the built-in waypoint lists (m/s).
    pub speed: f64,
    /// Replaces the built-in spawn point.
    pub spawn: Option<[f64; 3]>,
    /// Panels of a custom environment.
    pub panels: Vec<Panel>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            kind: EnvironmentKind::Corridor,
            speed: 0.3,
            spawn: None,
            panels: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Time limit (s).
    pub duration: f64,
    /// Interval between scans and segmentations (s).
    pub segmentation_period: f64,
    /// Waypoint switching radius (m).
    pub waypoint_tolerance: f64,
    /// True distance to a panel below which a collision is recorded (m).
    pub collision_distance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration: 90.0,
            segmentation_period: 0.5,
            waypoint_tolerance: 0.3,
            collision_distance: 0.05,
        }
    }
}

/// Everything one closed-loop run consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: ControllerMode,
    pub environment: EnvironmentConfig,
    /// Replaces the environment's built-in waypoints.
    #[serde(default)]
    pub waypoints: Option<Vec<Waypoint>>,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub lidar: LidarConfig,
    #[serde(default = "NoiseConfig::none")]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub nmpc: NmpcConfig,
    #[serde(default)]
    pub apf: ApfGains,
}

impl Scenario {
    /// A scenario with default sections around the given environment.
    pub fn new(name: &str, environment: EnvironmentConfig) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            mode: ControllerMode::Adaptive,
            environment,
            waypoints: None,
            run: RunConfig::default(),
            lidar: LidarConfig::default(),
            noise: NoiseConfig::none(),
            model: ModelParams::default(),
            clustering: ClusteringConfig::default(),
            nmpc: NmpcConfig::default(),
            apf: ApfGains::default(),
        }
    }

    pub fn build_environment(&self) -> Result<Environment> {
        let cfg = &self.environment;
        let mut env = match cfg.kind {
            EnvironmentKind::Corridor => Environment::corridor(cfg.speed),
            EnvironmentKind::ConfinedRoom => Environment::confined_room(cfg.speed),
            EnvironmentKind::Open => Environment::open(cfg.spawn.unwrap_or([0.0, 0.0, 1.5])),
            EnvironmentKind::Custom => Environment {
                name: "custom".into(),
                panels: cfg.panels.clone(),
                spawn: cfg.spawn.ok_or_else(|| Error::InvalidConfig("custom environment needs a spawn".into()))?,
                waypoints: Vec::new(),
            },
        };
        if cfg.kind != EnvironmentKind::Custom && !cfg.panels.is_empty() {
            return Err(Error::InvalidConfig("panels are only allowed for custom environments".into()));
        }
        if let Some(spawn) = cfg.spawn {
            env.spawn = spawn;
        }
        if let Some(w) = &self.waypoints {
            env.waypoints = w.clone();
        }
        env.validate(self.nmpc.d_s)?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.nmpc.validate()?;
        self.clustering.validate()?;
        self.lidar.validate()?;
        self.noise.validate()?;
        let r = &self.run;
        if !(r.duration > 0.0 && r.segmentation_period > 0.0 && r.waypoint_tolerance > 0.0 && r.collision_distance >= 0.0) {
            return Err(Error::InvalidConfig(format!("invalid run section: {r:?}")));
        }
        if !(self.environment.speed > 0.0) {
            return Err(Error::InvalidConfig("environment speed must be positive".into()));
        }
        self.build_environment().map(|_| ())
    }
}

/// Latest segmentation output, kept with the true sensor position at scan time.
struct Perception {
    planes: Vec<Plane>,
    cloud: PointCloud,
    origin: Vector3<f64>,
}

impl Perception {
    /// Re-expresses the snapshot around the vehicle's current position.
    fn relative_to(&self, p: &Vector3<f64>) -> (Vec<Plane>, Vec<Point3>) {
        let shift = p - self.origin;
        let planes = self
            .planes
            .iter()
            .filter_map(|pl| Plane::from_normal_offset(&pl.normal(), pl.zeta() + pl.normal().dot(&shift)).ok())
            .collect();
        let points = self.cloud.points.iter().map(|q| q - shift).collect();
        (planes, points)
    }
}

/// Runs one closed-loop scenario. Deterministic for a given scenario and seed;
/// wall-clock timing is returned separately in `RunTrace::timing`.
pub fn run_scenario(scenario: &Scenario) -> Result<RunTrace> {
    scenario.validate()?;
    let env = scenario.build_environment()?;
    let model = &scenario.model;
    let config = &scenario.nmpc;
    let ts = model.ts;

    let mut lidar_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    lidar_rng.set_stream(1);
    let mut odo_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    odo_rng.set_stream(2);
    let mut odometry = OdometryNoise::new(scenario.noise);

    let weight_mode = match scenario.mode {
        ControllerMode::Fixed => WeightMode::Fixed,
        _ => WeightMode::Adaptive,
    };
    let mut controller = ControllerState::new(config, model, weight_mode);
    let mut reference = ReferencePath::new(env.spawn, &env.waypoints, scenario.run.waypoint_tolerance);
    let mut truth = MavState::hover_at(Vector3::from(env.spawn));
    let mut perception = Perception {
        planes: Vec::new(),
        cloud: PointCloud::default(),
        origin: truth.p,
    };
    let mut trace = RunTrace::default();
    let max_ticks = (scenario.run.duration / ts).round() as usize;
    let scan_every = ((scenario.run.segmentation_period / ts).round() as usize).max(1);
    let mut scans = 0u64;

    for tick in 0..=max_ticks {
        let time = tick as f64 * ts;
        let (estimate, variances) = odometry.inject(&truth, time, &mut odo_rng);

        if tick % scan_every == 0 {
            let scan = synthetic_scan(&env, &truth, &scenario.lidar, &mut lidar_rng);
            let leveled = level_cloud(&scan, estimate.phi, estimate.theta);
            let clustering = ClusteringConfig {
                seed: scenario.clustering.seed.wrapping_add(scenario.seed).wrapping_add(scans),
                ..scenario.clustering.clone()
            };
            scans += 1;
            let started = Instant::now();
            let segmented = if leveled.is_empty() { Ok(None) } else { segment_planes(&leveled, &clustering).map(Some) };
            trace.timing.segmentation.push(started.elapsed().as_secs_f64());
            match segmented {
                Ok(result) => {
                    let planes = result.map(|r| r.planes).unwrap_or_default();
                    trace.snapshots.push(PlaneSnapshot::new(tick, time, leveled.len(), &planes));
                    perception = Perception {
                        planes,
                        cloud: leveled,
                        origin: truth.p,
                    };
                }
                Err(e) => log::warn!("segmentation failed at t = {time:.2} s, keeping previous planes: {e}"),
            }
        }
        let (planes, points) = perception.relative_to(&truth.p);

        let preview = reference.preview(config.horizon, ts);
        let x_ref: Vec<[f64; 8]> = preview
            .iter()
            .map(|(p, v)| reference_state([p.x, p.y, p.z], [v.x, v.y, v.z]))
            .collect();
        let started = Instant::now();
        let (input, diagnostics) = match scenario.mode {
            ControllerMode::Adaptive | ControllerMode::Fixed => {
                let (u, sol) = control_step(&estimate, variances, &x_ref, &planes, &mut controller, config, model);
                (u, Some(sol))
            }
            ControllerMode::Apf => {
                let goal = reference.active_waypoint().unwrap_or_else(|| reference.position());
                let u = potential_field_step(
                    &estimate,
                    &PointCloud::body(points),
                    &goal,
                    &scenario.apf,
                    model,
                    &config.u_min,
                    &config.u_max,
                );
                (u, None)
            }
        };
        trace.timing.control.push(started.elapsed().as_secs_f64());

        let weights: AdaptiveWeights = controller.weights;
        let rp = reference.position();
        let rv = reference.velocity();
        trace.ticks.push(TickRecord {
            tick,
            time,
            truth,
            estimate,
            input,
            reference_position: [rp.x, rp.y, rp.z],
            reference_velocity: [rv.x, rv.y, rv.z],
            weights: std::array::from_fn(|i| weights.q[i]),
            active_planes: planes.len(),
            cost: diagnostics.as_ref().map_or(0.0, |s| s.cost),
            constraint_violation: diagnostics.as_ref().map_or(0.0, |s| s.max_constraint_violation),
            rate_violation: diagnostics.as_ref().map_or(0.0, |s| s.max_rate_violation),
            inner_iterations: diagnostics.as_ref().map_or(0, |s| s.inner_iterations),
            penalty_rounds: diagnostics.as_ref().map_or(0, |s| s.penalty_rounds),
            converged: diagnostics.as_ref().is_none_or(|s| s.converged),
            min_distance: env.distance_to_nearest(&Point3::from(truth.p)),
        });

        truth = step_euler(&truth, &input, model);
        if !truth.is_finite() {
            return Err(Error::NonFinite("simulated state"));
        }
        let had_waypoints = !reference.finished();
        reference.advance(&truth.p, ts);
        if had_waypoints && reference.finished() {
            trace.reached_goal = true;
            break;
        }
    }
    Ok(trace)
}

