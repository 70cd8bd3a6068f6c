//! Deterministic 2.5D world: lanes, scripted traffic, ego kinematics and
//! ground-truth queries.

pub mod road;
pub mod scenario;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, OrientedBox, Pose2, Vec2};
pub use road::{Lane, Polyline, Route};
pub use scenario::{load_scenario, load_scenario_file, RoadMap, ScenarioConfig, ScenarioError, TrafficSpec};

/// Id reserved for the ego vehicle.
pub const EGO_ID: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl From<[f64; 3]> for BoxDims {
    fn from(v: [f64; 3]) -> Self {
        Self {
            length: v[0],
            width: v[1],
            height: v[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: u32,
    pub position: Vec2,
    /// Heading in `[-π, π)`.
    pub yaw: f64,
    pub speed: f64,
    pub size: BoxDims,
    pub z_base: f64,
}

impl VehicleState {
    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(self.position, self.yaw, self.size.length, self.size.width)
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.position.x, self.position.y, self.yaw)
    }

    /// Same vehicle expressed in `frame` (yaw and position relative to it).
    pub fn in_frame(&self, frame: &Pose2) -> VehicleState {
        VehicleState {
            position: frame.to_local(self.position),
            yaw: wrap_angle(self.yaw - frame.yaw),
            ..*self
        }
    }
}

/// Solid box in the map frame used by the sensor model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidBox {
    pub footprint: OrientedBox,
    pub z_min: f64,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct TrafficAgent {
    lane: usize,
    s: f64,
    speed: f64,
    /// Set once an open lane's end is reached; the vehicle stays parked.
    finished: bool,
}

/// Longitudinal acceleration and path curvature applied to the ego.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoCommand {
    pub accel: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoState {
    pub pose: Pose2,
    pub speed: f64,
    /// Progress along the ego route.
    pub route_s: f64,
    pub size: BoxDims,
    pub command: EgoCommand,
}

/// Route waypoints ahead of the ego in the map frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalWaypointPath {
    pub points: Vec<Vec2>,
    pub spacing: f64,
    /// Route ended before the requested horizon.
    pub end_reached: bool,
}

/// Immutable world snapshot; [`World::step`] returns the next one.
#[derive(Debug, Clone)]
pub struct World {
    pub tick: u64,
    pub time: f64,
    config: Arc<ScenarioConfig>,
    map: Arc<RoadMap>,
    route: Arc<Route>,
    traffic: Vec<TrafficAgent>,
    pub ego: EgoState,
    clutter: Arc<Vec<SolidBox>>,
}

impl World {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let map = config.build_map()?;
        let route = config.build_route(&map);
        let traffic = config
            .traffic
            .iter()
            .map(|t| {
                let lane_idx = map.lane_index(&t.lane).expect("validated lane");
                let lane = &map.lanes[lane_idx];
                TrafficAgent {
                    lane: lane_idx,
                    s: lane.normalize_s(t.start_s),
                    speed: t.initial_speed,
                    finished: false,
                }
            })
            .collect();
        let start_s = config.ego.start_s.min(route.length());
        let (p, yaw) = route.path.pose_at(start_s);
        let ego = EgoState {
            pose: Pose2::new(p.x, p.y, wrap_angle(yaw)),
            speed: config.ego.initial_speed,
            route_s: start_s,
            size: config.ego.size.into(),
            command: EgoCommand::default(),
        };
        let clutter = config
            .clutter
            .iter()
            .map(|c| {
                let center = Vec2::new(c.center[0], c.center[1]);
                let z = config.ground.height_at(center);
                SolidBox {
                    footprint: OrientedBox::new(center, c.yaw_deg.to_radians(), c.size[0], c.size[1]),
                    z_min: z,
                    z_max: z + c.size[2],
                }
            })
            .collect();
        Ok(Self {
            tick: 0,
            time: 0.0,
            config: Arc::new(config),
            map: Arc::new(map),
            route: Arc::new(route),
            traffic,
            ego,
            clutter: Arc::new(clutter),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn map(&self) -> &RoadMap {
        &self.map
    }

    pub fn route(&self) -> &Route {
        &self.route
    }

    /// Speed limit at the ego's current route position.
    pub fn ego_speed_limit(&self) -> f64 {
        self.route
            .speed_limit_at(self.ego.route_s)
            .unwrap_or(self.config.speed_limit)
    }

    pub fn ego_state(&self) -> VehicleState {
        VehicleState {
            id: EGO_ID,
            position: self.ego.pose.position(),
            yaw: self.ego.pose.yaw,
            speed: self.ego.speed,
            size: self.ego.size,
            z_base: self.config.ground.height_at(self.ego.pose.position()),
        }
    }

    /// Scripted traffic in the map frame, ids starting at 1 in scenario order.
    pub fn traffic_states(&self) -> Vec<VehicleState> {
        self.traffic
            .iter()
            .zip(&self.config.traffic)
            .enumerate()
            .map(|(i, (agent, spec))| {
                let lane = &self.map.lanes[agent.lane];
                let (p, yaw) = lane.centerline.pose_at(agent.s);
                VehicleState {
                    id: i as u32 + 1,
                    position: p,
                    yaw: wrap_angle(yaw),
                    speed: agent.speed,
                    size: spec.size.into(),
                    z_base: self.config.ground.height_at(p),
                }
            })
            .collect()
    }

    /// Ego followed by all traffic.
    pub fn all_states(&self) -> Vec<VehicleState> {
        let mut v = Vec::with_capacity(self.traffic.len() + 1);
        v.push(self.ego_state());
        v.extend(self.traffic_states());
        v
    }

    pub fn vehicle(&self, id: u32) -> Option<VehicleState> {
        if id == EGO_ID {
            Some(self.ego_state())
        } else {
            self.traffic_states().into_iter().find(|v| v.id == id)
        }
    }

    /// Every solid object except vehicle `exclude`.
    pub fn solid_boxes(&self, exclude: u32) -> Vec<SolidBox> {
        let mut out: Vec<SolidBox> = self
            .all_states()
            .into_iter()
            .filter(|v| v.id != exclude)
            .map(|v| SolidBox {
                footprint: v.bev_box(),
                z_min: v.z_base,
                z_max: v.z_base + v.size.height,
            })
            .collect();
        out.extend(self.clutter.iter().copied());
        out
    }

    pub fn clutter(&self) -> &[SolidBox] {
        &self.clutter
    }

    pub fn ground_height(&self, p: Vec2) -> f64 {
        self.config.ground.height_at(p)
    }

    pub fn set_ego_command(&mut self, command: EgoCommand) {
        self.ego.command = command;
    }

    /// Advance the world by `dt` seconds.
    pub fn step(&self, dt: f64) -> World {
        assert!(dt > 0.0, "dt must be positive");
        let mut next = self.clone();
        for (agent, spec) in next.traffic.iter_mut().zip(&self.config.traffic) {
            let lane = &self.map.lanes[agent.lane];
            if agent.finished {
                agent.speed = 0.0;
                continue;
            }
            let a = spec.accel_at(self.time);
            let v0 = agent.speed;
            let v1 = (v0 + a * dt).max(0.0);
            let ds = 0.5 * (v0 + v1) * dt;
            agent.speed = v1;
            if lane.closed {
                agent.s = (agent.s + ds).rem_euclid(lane.length());
            } else if agent.s + ds >= lane.length() {
                agent.s = lane.length();
                agent.speed = 0.0;
                agent.finished = true;
            } else {
                agent.s += ds;
            }
        }

        let ego = &mut next.ego;
        let v0 = ego.speed;
        let v1 = (v0 + ego.command.accel * dt).max(0.0);
        let dist = 0.5 * (v0 + v1) * dt;
        let yaw_mid = ego.pose.yaw + 0.5 * ego.command.curvature * dist;
        ego.pose.x += dist * yaw_mid.cos();
        ego.pose.y += dist * yaw_mid.sin();
        ego.pose.yaw = wrap_angle(ego.pose.yaw + ego.command.curvature * dist);
        ego.speed = v1;
        let route_len = self.route.length();
        ego.route_s = self
            .route
            .path
            .project(ego.pose.position(), ego.route_s - 1.0, ego.route_s + dist + 2.0);
        if ego.route_s >= route_len - 1e-6 {
            ego.route_s = route_len;
            ego.speed = 0.0;
        }

        next.tick += 1;
        next.time = (next.tick as f64) * dt;
        next
    }

    /// Vehicles within `radius` of vehicle `ego_id`, in its frame, nearest first.
    pub fn ground_truth_neighbors(&self, ego_id: u32, radius: f64) -> Vec<VehicleState> {
        let Some(me) = self.vehicle(ego_id) else {
            return Vec::new();
        };
        let frame = me.pose();
        let mut out: Vec<VehicleState> = self
            .all_states()
            .into_iter()
            .filter(|v| v.id != ego_id)
            .map(|v| v.in_frame(&frame))
            .filter(|v| v.position.norm() <= radius)
            .collect();
        out.sort_by(|a, b| a.position.norm().total_cmp(&b.position.norm()).then(a.id.cmp(&b.id)));
        out
    }

    /// The next `ceil(horizon_m / d_wp)` route centerline points ahead of the ego.
    pub fn global_waypoints(&self, horizon_m: f64) -> GlobalWaypointPath {
        let spacing = self.config.planner.d_wp;
        let wanted = if horizon_m <= 0.0 {
            0
        } else {
            (horizon_m / spacing - 1e-9).ceil() as usize
        };
        let len = self.route.length();
        let mut points = Vec::with_capacity(wanted);
        let mut end_reached = false;
        for k in 1..=wanted {
            let s = self.ego.route_s + k as f64 * spacing;
            if s > len + 1e-9 {
                end_reached = true;
                break;
            }
            points.push(self.route.path.pose_at(s).0);
        }
        GlobalWaypointPath {
            points,
            spacing,
            end_reached,
        }
    }
}
