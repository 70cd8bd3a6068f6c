//! Scenario files: TOML schema, defaults and validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::harness::ControlConfig;
use crate::lidar::LidarConfig;
use crate::perception::PerceptionConfig;
use crate::planner::PlannerConfig;
use crate::tracking::TrackerConfig;
use crate::world::road::{build_from_segments, Lane, Polyline, Route};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario at `{path}`: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

fn default_dt() -> f64 {
    0.05
}
fn default_speed_limit() -> f64 {
    8.33
}
fn default_lane_width() -> f64 {
    3.5
}
fn default_car() -> [f64; 3] {
    [4.6, 1.9, 1.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub sim_dt: f64,
    pub duration: f64,
    /// Road speed limit in m/s, used where a lane has none.
    #[serde(default = "default_speed_limit")]
    pub speed_limit: f64,
    #[serde(default)]
    pub ground: GroundConfig,
    pub lanes: Vec<LaneSpec>,
    pub ego: EgoSpec,
    #[serde(default)]
    pub traffic: Vec<TrafficSpec>,
    #[serde(default)]
    pub clutter: Vec<ClutterSpec>,
    #[serde(default)]
    pub lidar: LidarConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub control: ControlConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundConfig {
    /// Constant ground gradient `(dz/dx, dz/dy)` in the map frame.
    pub slope: [f64; 2],
}

impl GroundConfig {
    pub fn height_at(&self, p: Vec2) -> f64 {
        self.slope[0] * p.x + self.slope[1] * p.y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    Straight(f64),
    Arc { radius: f64, angle_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneSpec {
    pub id: String,
    #[serde(default = "default_lane_width")]
    pub width: f64,
    #[serde(default)]
    pub closed: bool,
    #[serde(default)]
    pub speed_limit: Option<f64>,
    #[serde(default)]
    pub points: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub start: Option<[f64; 2]>,
    #[serde(default)]
    pub heading_deg: Option<f64>,
    #[serde(default)]
    pub segments: Option<Vec<SegmentSpec>>,
    #[serde(default)]
    pub offset_from: Option<String>,
    /// Lateral offset from `offset_from`, positive to the left.
    #[serde(default)]
    pub offset: Option<f64>,
    #[serde(default)]
    pub reverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    pub route: Vec<String>,
    #[serde(default)]
    pub start_s: f64,
    /// `(length, width, height)` in meters.
    #[serde(default = "default_car")]
    pub size: [f64; 3],
    #[serde(default)]
    pub initial_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub duration: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub lane: String,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default = "default_car")]
    pub size: [f64; 3],
    #[serde(default)]
    pub initial_speed: f64,
    /// Piecewise-constant acceleration phases; constant speed afterwards.
    #[serde(default)]
    pub phases: Vec<PhaseSpec>,
    /// Repeat the phase list indefinitely.
    #[serde(default)]
    pub cycle: bool,
}

impl TrafficSpec {
    /// Scripted acceleration at time `t` since the start.
    pub fn accel_at(&self, t: f64) -> f64 {
        let total: f64 = self.phases.iter().map(|p| p.duration).sum();
        if self.phases.is_empty() || total <= 0.0 {
            return 0.0;
        }
        let mut t = t;
        if self.cycle {
            t = t.rem_euclid(total);
        } else if t >= total {
            return 0.0;
        }
        let mut acc = 0.0;
        for p in &self.phases {
            if t < acc + p.duration {
                return p.accel;
            }
            acc += p.duration;
        }
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterSpec {
    pub center: [f64; 2],
    #[serde(default)]
    pub yaw_deg: f64,
    pub size: [f64; 3],
}

/// Road network built from the lane specs.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadMap {
    pub lanes: Vec<Lane>,
}

impl RoadMap {
    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn lane_index(&self, id: &str) -> Option<usize> {
        self.lanes.iter().position(|l| l.id == id)
    }
}

/// Parse and validate a scenario from TOML text.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_file(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_scenario(&text)
}

fn check_size(path: &str, size: &[f64; 3]) -> Result<(), ScenarioError> {
    for (name, v) in ["length", "width", "height"].iter().zip(size) {
        if !(v.is_finite() && *v > 0.0) {
            return Err(invalid(format!("{path}.size.{name}"), format!("must be > 0, got {v}")));
        }
    }
    Ok(())
}

fn positive(path: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be > 0, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        positive("sim_dt", self.sim_dt)?;
        positive("duration", self.duration)?;
        positive("speed_limit", self.speed_limit)?;
        if self.lanes.is_empty() {
            return Err(invalid("lanes", "at least one lane is required"));
        }
        let map = self.build_map()?;
        if self.ego.route.is_empty() {
            return Err(invalid("ego.route", "route must reference at least one lane"));
        }
        for (i, id) in self.ego.route.iter().enumerate() {
            if map.lane(id).is_none() {
                return Err(invalid(format!("ego.route[{i}]"), format!("unknown lane `{id}`")));
            }
        }
        check_size("ego", &self.ego.size)?;
        if self.ego.start_s < 0.0 || self.ego.initial_speed < 0.0 {
            return Err(invalid("ego", "start_s and initial_speed must be >= 0"));
        }
        for (i, t) in self.traffic.iter().enumerate() {
            let path = format!("traffic[{i}]");
            if map.lane(&t.lane).is_none() {
                return Err(invalid(format!("{path}.lane"), format!("unknown lane `{}`", t.lane)));
            }
            check_size(&path, &t.size)?;
            if t.initial_speed < 0.0 {
                return Err(invalid(format!("{path}.initial_speed"), "must be >= 0"));
            }
            for (j, p) in t.phases.iter().enumerate() {
                if !(p.duration.is_finite() && p.duration > 0.0) {
                    return Err(invalid(format!("{path}.phases[{j}].duration"), "must be > 0"));
                }
            }
        }
        for (i, c) in self.clutter.iter().enumerate() {
            check_size(&format!("clutter[{i}]"), &c.size)?;
        }
        self.lidar.validate().map_err(|m| invalid("lidar", m))?;
        self.perception.validate().map_err(|m| invalid("perception", m))?;
        self.tracker.validate().map_err(|m| invalid("tracker", m))?;
        self.planner.validate().map_err(|m| invalid("planner", m))?;
        self.control.validate().map_err(|m| invalid("control", m))?;
        Ok(())
    }

    /// Resolve lane specs into geometry.
    pub fn build_map(&self) -> Result<RoadMap, ScenarioError> {
        let mut lanes: Vec<Lane> = Vec::with_capacity(self.lanes.len());
        for (i, spec) in self.lanes.iter().enumerate() {
            let path = format!("lanes[{i}]");
            if lanes.iter().any(|l| l.id == spec.id) {
                return Err(invalid(
                    format!("{path}.id"),
                    format!("duplicate lane id `{}`", spec.id),
                ));
            }
            positive(&format!("{path}.width"), spec.width)?;
            if let Some(v) = spec.speed_limit {
                positive(&format!("{path}.speed_limit"), v)?;
            }
            let sources = [
                spec.points.is_some(),
                spec.segments.is_some(),
                spec.offset_from.is_some(),
            ]
            .iter()
            .filter(|b| **b)
            .count();
            if sources != 1 {
                return Err(invalid(
                    path,
                    "exactly one of `points`, `segments` or `offset_from` must be given",
                ));
            }
            let mut pts: Vec<Vec2> = if let Some(points) = &spec.points {
                points.iter().map(|p| Vec2::new(p[0], p[1])).collect()
            } else if let Some(segments) = &spec.segments {
                let start = spec.start.unwrap_or([0.0, 0.0]);
                let heading = spec.heading_deg.unwrap_or(0.0).to_radians();
                let mut segs = Vec::with_capacity(segments.len());
                for (j, s) in segments.iter().enumerate() {
                    match s {
                        SegmentSpec::Straight(len) => {
                            positive(&format!("{path}.segments[{j}].straight"), *len)?;
                            segs.push((*len, None));
                        }
                        SegmentSpec::Arc { radius, angle_deg } => {
                            positive(&format!("{path}.segments[{j}].arc.radius"), *radius)?;
                            segs.push((angle_deg.to_radians(), Some(*radius)));
                        }
                    }
                }
                build_from_segments(Vec2::new(start[0], start[1]), heading, &segs, 1.0)
            } else {
                let base_id = spec.offset_from.as_deref().unwrap_or_default();
                let base = lanes.iter().find(|l| l.id == base_id).ok_or_else(|| {
                    invalid(
                        format!("{path}.offset_from"),
                        format!("unknown or later-defined lane `{base_id}`"),
                    )
                })?;
                base.centerline.offset(spec.offset.unwrap_or(0.0)).points().to_vec()
            };
            if spec.reverse {
                pts.reverse();
            }
            if spec.closed {
                if let (Some(first), Some(last)) = (pts.first().copied(), pts.last().copied()) {
                    if (first - last).norm() > 1e-6 {
                        pts.push(first);
                    } else {
                        let n = pts.len();
                        pts[n - 1] = first;
                    }
                }
            }
            let centerline = Polyline::new(pts);
            if centerline.points().len() < 2 || centerline.length() <= 0.0 {
                return Err(invalid(path, "lane geometry must have positive length"));
            }
            lanes.push(Lane {
                id: spec.id.clone(),
                centerline,
                width: spec.width,
                closed: spec.closed,
                speed_limit: spec.speed_limit,
            });
        }
        Ok(RoadMap { lanes })
    }

    pub fn build_route(&self, map: &RoadMap) -> Route {
        let lanes: Vec<&Lane> = self.ego.route.iter().filter_map(|id| map.lane(id)).collect();
        Route::from_lanes(&lanes)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 1
duration = 5.0

[[lanes]]
id = "main"
points = [[0.0, 0.0], [100.0, 0.0]]

[ego]
route = ["main"]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = load_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.sim_dt, 0.05);
        assert!(cfg.traffic.is_empty());
        assert_eq!(cfg.planner.d_wp, 2.0);
        assert_eq!(cfg.lidar.channels, 64);
    }

    #[test]
    fn loading_twice_is_structurally_equal() {
        assert_eq!(load_scenario(MINIMAL).unwrap(), load_scenario(MINIMAL).unwrap());
    }

    #[test]
    fn negative_box_length_names_field() {
        let text = format!("{MINIMAL}\n[[traffic]]\nlane = \"main\"\nstart_s = 10.0\nsize = [-4.0, 1.9, 1.5]\n");
        let err = load_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("traffic[0].size.length"), "{msg}");
    }

    #[test]
    fn dangling_route_reference() {
        let text = MINIMAL.replace("route = [\"main\"]", "route = [\"main\", \"nowhere\"]");
        let msg = load_scenario(&text).unwrap_err().to_string();
        assert!(msg.contains("ego.route[1]"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let text = MINIMAL.replace("duration = 5.0", "duration = 5.0\nbogus = 3");
        let msg = load_scenario(&text).unwrap_err().to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn phases_and_cycles() {
        let t = TrafficSpec {
            lane: "main".into(),
            start_s: 0.0,
            size: default_car(),
            initial_speed: 5.0,
            phases: vec![
                PhaseSpec {
                    duration: 2.0,
                    accel: -1.0,
                },
                PhaseSpec {
                    duration: 3.0,
                    accel: 0.5,
                },
            ],
            cycle: true,
        };
        assert_eq!(t.accel_at(1.0), -1.0);
        assert_eq!(t.accel_at(3.0), 0.5);
        assert_eq!(t.accel_at(6.0), -1.0);
    }
}
