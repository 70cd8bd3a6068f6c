//! Closed-loop runs: world, sensing, perception, tracking, planning and
//! control stepped once per tick, with every intermediate result recorded.

pub mod metrics;
pub mod trace;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{OrientedBox, Pose2, Vec2};
use crate::lidar::{self, PointCloud};
use crate::perception::{detect_frame, FrameDetections};
use crate::planner::{plan_path, plan_speed, planning_horizon, VehicleInfo};
use crate::tracking::{EgoMotion, Tracker};
use crate::world::{EgoCommand, ScenarioConfig, ScenarioError, World, EGO_ID};
pub use metrics::{build_report, MetricsReport};
pub use trace::{DetectionFrame, PlanRow, RunMeta, TimingRow, Trace, WorldRow, TRACE_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trace error: {0}")]
    Trace(String),
    #[error("trace has no records")]
    EmptyTrace,
    #[error("frame {frame} is outside the run ({ticks} ticks)")]
    FrameOutOfRange { frame: u64, ticks: u64 },
}

/// Where the planner gets its obstacles from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Ground-truth neighbours.
    Gt,
    /// Simulated scans through detection and tracking.
    Lidar,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Gt => "gt",
            Mode::Lidar => "lidar",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gt" | "ground_truth" => Ok(Mode::Gt),
            "lidar" => Ok(Mode::Lidar),
            _ => Err(format!("unknown mode `{s}`, expected gt or lidar")),
        }
    }
}

/// Proportional speed control and pure-pursuit steering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlConfig {
    /// Acceleration per m/s of speed error, 1/s.
    pub speed_gain: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// 1/m
    pub max_curvature: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            speed_gain: 10.0,
            accel_min: -7.0,
            accel_max: 3.0,
            max_curvature: 0.2,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.speed_gain > 0.0) {
            return Err("speed_gain must be > 0".into());
        }
        if !(self.accel_min < 0.0 && self.accel_max > 0.0) {
            return Err("need accel_min < 0 < accel_max".into());
        }
        if !(self.max_curvature > 0.0) {
            return Err("max_curvature must be > 0".into());
        }
        Ok(())
    }
}

/// What the planner hands to the controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub target_speed: f64,
    /// Curvature toward the target pose, 1/m.
    pub steer: f64,
}

impl ControlCommand {
    /// Pure pursuit toward `target` given in the ego frame.
    pub fn toward(target: &Pose2, target_speed: f64, config: &ControlConfig) -> Self {
        let d2 = target.x * target.x + target.y * target.y;
        let steer = if d2 > 1e-9 { 2.0 * target.y / d2 } else { 0.0 };
        Self {
            target_speed,
            steer: steer.clamp(-config.max_curvature, config.max_curvature),
        }
    }

    pub fn actuate(&self, speed: f64, config: &ControlConfig) -> EgoCommand {
        EgoCommand {
            accel: (config.speed_gain * (self.target_speed - speed)).clamp(config.accel_min, config.accel_max),
            curvature: self.steer,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
    /// Stop after this many ticks instead of the scenario duration.
    pub max_ticks: Option<u64>,
    /// Write every scan under this directory.
    pub cloud_dir: Option<PathBuf>,
    /// Keep the scan and detections of this frame in the output.
    pub capture_frame: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct CapturedFrame {
    pub cloud: PointCloud,
    pub detections: FrameDetections,
    pub ego_pose: Pose2,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub report: MetricsReport,
    pub captured: Option<CapturedFrame>,
}

/// Counts the onsets of ground-truth overlap between the ego and any other
/// vehicle or static object.
#[derive(Debug, Clone, Default)]
pub struct CollisionOracle {
    touching: Vec<bool>,
    pub count: u64,
}

impl CollisionOracle {
    /// `others` must list the same objects in the same order every tick.
    pub fn observe(&mut self, ego: &OrientedBox, others: &[OrientedBox]) {
        self.touching.resize(others.len(), false);
        for (i, b) in others.iter().enumerate() {
            let now = ego.overlaps(b);
            if now && !self.touching[i] {
                self.count += 1;
            }
            self.touching[i] = now;
        }
    }
}

/// Gap from the ego to the first vehicle occupying its route within
/// `lookahead` meters, minus `offset`.
pub fn route_gap(world: &World, lookahead: f64, offset: f64) -> Option<f64> {
    let boxes: Vec<OrientedBox> = world.traffic_states().iter().map(|v| v.bev_box()).collect();
    if boxes.is_empty() {
        return None;
    }
    let route = &world.route().path;
    let ego = world.ego.pose.position();
    let start = world.ego.route_s;
    let end = (start + lookahead).min(route.length());
    let mut s = start;
    while s <= end {
        let p = route.pose_at(s).0;
        if let Some(b) = boxes
            .iter()
            .filter(|b| b.contains(p))
            .min_by(|a, b| a.distance_to_point(ego).total_cmp(&b.distance_to_point(ego)))
        {
            return Some(b.distance_to_point(ego) - offset);
        }
        s += 0.5;
    }
    None
}

fn vehicle_info(center: Vec2, yaw: f64, length: f64, width: f64, speed: f64) -> VehicleInfo {
    VehicleInfo {
        corners: OrientedBox::new(center, yaw, length, width).corners(),
        position: center,
        yaw,
        speed,
    }
}

fn world_rows(world: &World) -> impl Iterator<Item = WorldRow> + '_ {
    world.all_states().into_iter().map(|v| WorldRow {
        tick: world.tick,
        time: world.time,
        id: v.id,
        x: v.position.x,
        y: v.position.y,
        yaw: v.yaw,
        speed: v.speed,
        length: v.size.length,
        width: v.size.width,
        height: v.size.height,
    })
}

fn micros(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e6
}

/// Run one scenario to completion.
pub fn run_closed_loop(config: &ScenarioConfig, mode: Mode, options: &RunOptions) -> Result<RunOutput, HarnessError> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    let mut world = World::new(config.clone())?;
    let dt = config.sim_dt;
    let ticks = options
        .max_ticks
        .unwrap_or_else(|| (config.duration / dt - 1e-9).ceil().max(0.0) as u64);

    let mut lidar_rng = ChaCha8Rng::seed_from_u64(config.seed);
    lidar_rng.set_stream(1);
    let mut ransac_rng = ChaCha8Rng::seed_from_u64(config.seed);
    ransac_rng.set_stream(2);
    let mut tracker = Tracker::new(config.tracker.clone());
    let mut collisions = CollisionOracle::default();
    let mut prev_pose: Option<Pose2> = None;
    let mut captured = None;

    let mut trace = Trace {
        meta: RunMeta {
            schema_version: TRACE_SCHEMA_VERSION,
            scenario: config.name.clone(),
            seed: config.seed,
            mode,
            ticks,
            dt,
            roi_radius: config.perception.roi_radius,
            static_speed: config.tracker.static_speed,
            lidar_config_hash: config.lidar.config_hash(),
        },
        scenario_text: config.to_toml(),
        world: Vec::new(),
        detections: Vec::new(),
        tracks: Vec::new(),
        plans: Vec::new(),
        timing: Vec::new(),
    };

    for _ in 0..ticks {
        let tick = world.tick;
        trace.world.extend(world_rows(&world));
        let ego_pose = world.ego.pose;
        let ego_speed = world.ego.speed;
        let mut timing = TimingRow {
            tick,
            ..Default::default()
        };

        let cloud = match mode {
            Mode::Lidar => Some(lidar::scan(&world, EGO_ID, &config.lidar, &mut lidar_rng)),
            Mode::Gt => None,
        };
        if let (Some(dir), Some(cloud)) = (&options.cloud_dir, &cloud) {
            lidar::write_fixture(dir, &format!("frame_{tick:06}"), cloud, ego_pose, &config.lidar)?;
        }

        let total = Instant::now();
        let vehicles: Vec<VehicleInfo> = match &cloud {
            Some(cloud) => {
                let t = Instant::now();
                let frame = detect_frame(cloud, &config.perception, &mut ransac_rng);
                let t_track = Instant::now();
                let motion = prev_pose.map(|p| EgoMotion::between(&p, &ego_pose, dt));
                let dets = (!frame.skipped).then_some(frame.detections.as_slice());
                tracker.step(world.time, motion.as_ref(), dets);
                timing.tracking_us = micros(t_track);
                timing.perception_us = micros(t);
                timing.crop_us = frame.timings.crop_us;
                timing.voxel_us = frame.timings.voxel_us;
                timing.ground_us = frame.timings.ground_us;
                timing.cluster_us = frame.timings.cluster_us;
                timing.fit_us = frame.timings.fit_us;

                let static_speed = tracker.config.static_speed;
                let infos = tracker
                    .confirmed()
                    .map(|t| {
                        let speed = if t.is_static(static_speed) { 0.0 } else { t.speed() };
                        vehicle_info(t.position(), t.yaw(), t.extent[0], t.extent[1], speed)
                    })
                    .collect();
                trace.tracks.extend(tracker.records(tick, world.time));
                trace.detections.push(DetectionFrame {
                    frame_id: tick,
                    time: world.time,
                    skipped: frame.skipped,
                    counts: frame.counts,
                    detections: frame.detections.clone(),
                });
                if options.capture_frame == Some(tick) {
                    captured = Some(CapturedFrame {
                        cloud: cloud.clone(),
                        detections: frame,
                        ego_pose,
                    });
                }
                infos
            }
            None => world
                .ground_truth_neighbors(EGO_ID, config.perception.roi_radius)
                .iter()
                .map(|v| vehicle_info(v.position, v.yaw, v.size.length, v.size.width, v.speed))
                .collect(),
        };
        // Followers would otherwise extend their bounds over the ego itself.
        let vehicles: Vec<VehicleInfo> = vehicles.into_iter().filter(|v| v.position.x >= 0.0).collect();

        let mut planner = config.planner.clone();
        planner.v_max = planner.v_max.min(world.ego_speed_limit());
        let horizon = planning_horizon(ego_speed, &planner);
        let t = Instant::now();
        let global = world.global_waypoints(horizon * planner.f_safe + planner.d_wp);
        let path = plan_path(&global.points, &ego_pose, ego_speed, &vehicles, &planner);
        timing.path_us = micros(t);
        let t = Instant::now();
        let speed = plan_speed(path.blocking.as_ref(), ego_speed, path.d_pose, &planner);
        timing.speed_us = micros(t);
        timing.planner_total_us = micros(total);

        let command = ControlCommand::toward(&path.target_pose, speed.v_exc, &config.control);
        world.set_ego_command(command.actuate(ego_speed, &config.control));

        let ego_box = world.ego_state().bev_box();
        let mut others: Vec<OrientedBox> = world.traffic_states().iter().map(|v| v.bev_box()).collect();
        others.extend(world.clutter().iter().map(|c| c.footprint));
        collisions.observe(&ego_box, &others);

        trace.plans.push(PlanRow {
            tick,
            time: world.time,
            case: speed.case,
            ego_speed,
            v_pre: speed.v_pre,
            v_exc: speed.v_exc,
            v_reach: speed.v_reach,
            d_safe: speed.d_safe,
            blocking_distance: path.blocking.map(|b| b.distance),
            blocking_speed: path.blocking.map(|b| b.speed),
            blocking_yaw: path.blocking.map(|b| b.yaw),
            path_points: path.trajectory.len(),
            free_points: path.collision_free_path.len(),
            gt_gap: route_gap(&world, 40.0, planner.standstill_offset),
            collisions: collisions.count,
        });
        trace.timing.push(timing);

        prev_pose = Some(ego_pose);
        world = world.step(dt);
    }

    let report = build_report(&trace)?;
    Ok(RunOutput {
        trace,
        report,
        captured,
    })
}

pub fn write_report(dir: &Path, report: &MetricsReport) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Trace(e.to_string()))?;
    std::fs::write(dir.join("report.json"), text + "\n")?;
    Ok(())
}

/// Run and write the trace directory with its report.
pub fn run_to_dir(
    config: &ScenarioConfig,
    mode: Mode,
    options: &RunOptions,
    out: &Path,
) -> Result<MetricsReport, HarnessError> {
    let out_run = run_closed_loop(config, mode, options)?;
    out_run.trace.write(out)?;
    write_report(out, &out_run.report)?;
    Ok(out_run.report)
}
