//! Local motion planner: waypoints to a smoothed ego-frame trajectory,
//! collision checking against velocity-extended vehicle bounds, and speed
//! selection.

pub mod bounds;
pub mod bspline;

use serde::{Deserialize, Serialize};

pub use bounds::{
    extend_bounds, extended_corners, generate_collision_free_path, intersect_check, CollisionCheck, IntersectResult,
    VBound, VehicleInfo,
};
pub use bspline::{bspline_resample, EgoTrajectory, QuadraticBSpline};

use crate::geometry::{wrap_angle, Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BrakingModel {
    /// `v / (2 mu g)`
    #[serde(alias = "paper")]
    Linear,
    /// `v^2 / (2 mu g)`
    Kinematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub mu: f64,
    pub g: f64,
    /// Global waypoint spacing, meters.
    pub d_wp: f64,
    pub f_safe: f64,
    /// Resampling step along the trajectory, meters.
    pub t_s: f64,
    /// Look-ahead time for extending vehicle bounds, seconds.
    pub t_est: f64,
    pub d_buffer: f64,
    pub v_appr: f64,
    pub w: f64,
    pub a_max: f64,
    pub v_init: f64,
    pub v_max: f64,
    /// Control period, seconds.
    pub dt: f64,
    pub braking_model: BrakingModel,
    /// Lower bound on the planning horizon, meters.
    pub min_horizon: f64,
    /// Trajectory index of the target pose.
    pub lookahead_index: usize,
    /// Subtracted from the bound distance to get the gap the speed law regulates.
    pub standstill_offset: f64,
    /// Maximum heading difference for a vehicle to count as a leader, degrees.
    pub leader_yaw_deg: f64,
    /// Minimum speed for a vehicle to count as a leader, m/s.
    pub leader_min_speed: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            mu: 0.35,
            g: 9.8,
            d_wp: 2.0,
            f_safe: 1.5,
            t_s: 0.5,
            t_est: 1.0,
            d_buffer: 5.0,
            v_appr: 3.0,
            w: 10.0,
            a_max: 2.5,
            v_init: 6.0,
            v_max: 8.33,
            dt: 0.05,
            braking_model: BrakingModel::Linear,
            min_horizon: 20.0,
            lookahead_index: 10,
            standstill_offset: 3.8,
            leader_yaw_deg: 30.0,
            leader_min_speed: 0.5,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("mu", self.mu),
            ("g", self.g),
            ("d_wp", self.d_wp),
            ("t_s", self.t_s),
            ("t_est", self.t_est),
            ("d_buffer", self.d_buffer),
            ("v_appr", self.v_appr),
            ("w", self.w),
            ("a_max", self.a_max),
            ("v_init", self.v_init),
            ("v_max", self.v_max),
            ("dt", self.dt),
            ("min_horizon", self.min_horizon),
            ("leader_yaw_deg", self.leader_yaw_deg),
            ("leader_min_speed", self.leader_min_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0"));
            }
        }
        if !(self.f_safe >= 1.0) {
            return Err("f_safe must be >= 1".into());
        }
        if !(self.standstill_offset >= 0.0) {
            return Err("standstill_offset must be >= 0".into());
        }
        if self.lookahead_index == 0 {
            return Err("lookahead_index must be >= 1".into());
        }
        Ok(())
    }

    pub fn d_safe(&self, v: f64) -> f64 {
        braking_distance(v, self.mu, self.g, self.braking_model) + self.d_buffer
    }
}

/// Map-frame points into the frame of `ego` (x along the heading).
pub fn to_ego_frame(points: &[Vec2], ego: &Pose2) -> Vec<Vec2> {
    let (s, c) = ego.yaw.sin_cos();
    points
        .iter()
        .map(|p| {
            let d = p - ego.position();
            Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
        })
        .collect()
}

pub fn braking_distance(v: f64, mu: f64, g: f64, model: BrakingModel) -> f64 {
    match model {
        BrakingModel::Linear => v / (2.0 * mu * g),
        BrakingModel::Kinematic => v * v / (2.0 * mu * g),
    }
}

/// `ceil(d / d_wp * f_safe)`, clamped to `available`; the flag reports clamping.
pub fn waypoint_count(d: f64, d_wp: f64, f_safe: f64, available: usize) -> (usize, bool) {
    let m = if d <= 0.0 {
        0
    } else {
        (d / d_wp * f_safe - 1e-9).ceil() as usize
    };
    if m > available {
        (available, true)
    } else {
        (m, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedCase {
    Normal,
    Obstacle,
    Platoon,
}

/// Blocking vehicle as reported by the collision check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blocking {
    /// Gap after subtracting the standstill offset, meters.
    pub distance: f64,
    pub speed: f64,
    /// Heading relative to the ego, radians.
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedDecision {
    pub case: SpeedCase,
    pub v_pre: f64,
    pub v_exc: f64,
    pub v_reach: f64,
    pub d_safe: f64,
}

/// `v_current + (d_pose - d_reach) * dt`
pub fn speed_normal(v_current: f64, d_pose: f64, d_reach: f64, dt: f64) -> f64 {
    v_current + (d_pose - d_reach) * dt
}

/// `v_appr + (d_obs - d_safe) / d_safe * v_appr`
pub fn speed_obstacle(d_obs: f64, d_safe: f64, v_appr: f64) -> f64 {
    v_appr + (d_obs - d_safe) / d_safe * v_appr
}

/// `v_lead + w * (d_lead - d_safe) * dt`
pub fn speed_platoon(v_lead: f64, d_lead: f64, d_safe: f64, w: f64, dt: f64) -> f64 {
    v_lead + w * (d_lead - d_safe) * dt
}

/// `v_current + a_max * dt`, kept within `[v_init, v_max]`.
pub fn speed_reachable(v_current: f64, a_max: f64, dt: f64, v_init: f64, v_max: f64) -> f64 {
    (v_current + a_max * dt).max(v_init).min(v_max)
}

pub fn clamp_speed(v_pre: f64, v_reach: f64) -> f64 {
    if v_pre < 0.0 {
        0.0
    } else if v_pre < v_reach {
        v_pre
    } else {
        v_reach
    }
}

pub fn is_leader(blocking: &Blocking, config: &PlannerConfig) -> bool {
    wrap_angle(blocking.yaw).abs() < config.leader_yaw_deg.to_radians() && blocking.speed > config.leader_min_speed
}

/// Select the speed case and bound the commanded speed.
pub fn plan_speed(blocking: Option<&Blocking>, v_current: f64, d_pose: f64, config: &PlannerConfig) -> SpeedDecision {
    let d_safe = config.d_safe(v_current);
    let (case, v_pre) = match blocking {
        None => (
            SpeedCase::Normal,
            speed_normal(v_current, d_pose, v_current * config.dt, config.dt),
        ),
        Some(b) if is_leader(b, config) => (
            SpeedCase::Platoon,
            speed_platoon(b.speed, b.distance, d_safe, config.w, config.dt),
        ),
        Some(b) => (SpeedCase::Obstacle, speed_obstacle(b.distance, d_safe, config.v_appr)),
    };
    let v_reach = speed_reachable(v_current, config.a_max, config.dt, config.v_init, config.v_max);
    SpeedDecision {
        case,
        v_pre,
        v_exc: clamp_speed(v_pre, v_reach),
        v_reach,
        d_safe,
    }
}

/// Path stage output: smoothed trajectory, its collision-free prefix and the
/// target pose for the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPlan {
    pub trajectory: EgoTrajectory,
    pub collision_free_path: EgoTrajectory,
    pub blocking: Option<Blocking>,
    pub blocking_index: Option<usize>,
    /// `(x, y, heading)` in the ego frame.
    pub target_pose: Pose2,
    /// Arc length from the ego to the target pose.
    pub d_pose: f64,
    pub horizon: f64,
    pub waypoints_truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub path: PathPlan,
    pub speed: SpeedDecision,
}

/// Planning horizon in meters for the current speed.
pub fn planning_horizon(ego_speed: f64, config: &PlannerConfig) -> f64 {
    braking_distance(ego_speed, config.mu, config.g, config.braking_model).max(config.min_horizon)
}

/// Map waypoints ahead of the ego to a collision-checked ego-frame path.
pub fn plan_path(
    global_waypoints: &[Vec2],
    ego: &Pose2,
    ego_speed: f64,
    vehicles: &[VehicleInfo],
    config: &PlannerConfig,
) -> PathPlan {
    let horizon = planning_horizon(ego_speed, config);
    let (m, truncated) = waypoint_count(horizon, config.d_wp, config.f_safe, global_waypoints.len());
    let mut wps = vec![Vec2::zeros()];
    wps.extend(to_ego_frame(&global_waypoints[..m], ego));
    let trajectory = bspline_resample(&wps, config.t_s);
    let check = generate_collision_free_path(vehicles, &trajectory.points, config.t_est);
    let collision_free_path = trajectory.prefix(check.keep);
    let blocking = check.distance.map(|d| Blocking {
        distance: d - config.standstill_offset,
        speed: check.speed.unwrap_or(0.0),
        yaw: check.yaw.unwrap_or(0.0),
    });
    // Target pose on the full trajectory so steering stays smooth when the
    // collision-free prefix is short.
    let idx = config.lookahead_index.min(trajectory.len().saturating_sub(1));
    let target = trajectory.points.get(idx).copied().unwrap_or_else(Vec2::zeros);
    let heading = if trajectory.len() >= 2 {
        let a = trajectory.points[idx.saturating_sub(1).min(trajectory.len() - 2)];
        let b = trajectory.points[(idx.max(1)).min(trajectory.len() - 1)];
        (b - a).y.atan2((b - a).x)
    } else {
        0.0
    };
    PathPlan {
        d_pose: trajectory.cum_arc.get(idx).copied().unwrap_or(0.0),
        trajectory,
        collision_free_path,
        blocking,
        blocking_index: check.blocking,
        target_pose: Pose2::new(target.x, target.y, heading),
        horizon,
        waypoints_truncated: truncated,
    }
}

/// Plan one control step: path generation followed by speed planning.
pub fn plan(
    global_waypoints: &[Vec2],
    ego: &Pose2,
    ego_speed: f64,
    vehicles: &[VehicleInfo],
    config: &PlannerConfig,
) -> PlanResult {
    let path = plan_path(global_waypoints, ego, ego_speed, vehicles, config);
    let speed = plan_speed(path.blocking.as_ref(), ego_speed, path.d_pose, config);
    PlanResult { path, speed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ego_frame_examples() {
        let p = vec![Vec2::new(1.0, 2.0)];
        assert_eq!(to_ego_frame(&p, &Pose2::new(0.0, 0.0, 0.0)), p);
        let out = to_ego_frame(&[Vec2::new(5.0, 4.0)], &Pose2::new(3.0, 4.0, 0.0));
        assert!((out[0] - Vec2::new(2.0, 0.0)).norm() < 1e-12);
        let out = to_ego_frame(
            &[Vec2::new(0.0, 5.0)],
            &Pose2::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
        );
        assert!((out[0] - Vec2::new(5.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn braking_examples() {
        let d = braking_distance(8.33, 0.35, 9.8, BrakingModel::Linear);
        assert!((d - 8.33 / 6.86).abs() < 1e-12);
        assert!((d - 1.2143).abs() < 1e-4);
        assert_eq!(braking_distance(0.0, 0.35, 9.8, BrakingModel::Linear), 0.0);
        let k = braking_distance(8.33, 0.35, 9.8, BrakingModel::Kinematic);
        assert!((k - 10.115).abs() < 1e-3);
    }

    #[test]
    fn braking_model_names() {
        let cfg: PlannerConfig = toml::from_str("braking_model = \"paper\"").unwrap();
        assert_eq!(cfg.braking_model, BrakingModel::Linear);
        let cfg: PlannerConfig = toml::from_str("braking_model = \"kinematic\"").unwrap();
        assert_eq!(cfg.braking_model, BrakingModel::Kinematic);
    }

    #[test]
    fn waypoint_count_examples() {
        assert_eq!(waypoint_count(20.0, 2.0, 1.5, 100), (15, false));
        assert_eq!(waypoint_count(0.0, 2.0, 1.5, 100), (0, false));
        assert_eq!(waypoint_count(20.0, 2.0, 1.5, 8), (8, true));
    }

    #[test]
    fn speed_law_examples() {
        let c = PlannerConfig::default();
        assert_eq!(speed_normal(6.0, 0.3, 0.3, 0.05), 6.0);
        assert_eq!(speed_obstacle(7.0, 7.0, 3.0), 3.0);
        assert_eq!(speed_platoon(8.0, 7.0, 7.0, c.w, c.dt), 8.0);
        assert_eq!(speed_obstacle(14.0, 7.0, 3.0), 6.0);
        assert_eq!(clamp_speed(-1.0, 6.0), 0.0);
        assert_eq!(clamp_speed(11.0, 6.0), 6.0);
        assert_eq!(speed_reachable(0.0, 2.5, 0.05, 6.0, 8.33), 6.0);
        assert_eq!(speed_reachable(8.3, 2.5, 0.05, 6.0, 8.33), 8.33);
    }

    #[test]
    fn case_selection() {
        let c = PlannerConfig::default();
        let lead = Blocking {
            distance: 10.0,
            speed: 5.0,
            yaw: 0.1,
        };
        assert_eq!(plan_speed(Some(&lead), 5.0, 5.0, &c).case, SpeedCase::Platoon);
        let crossing = Blocking { yaw: 1.2, ..lead };
        assert_eq!(plan_speed(Some(&crossing), 5.0, 5.0, &c).case, SpeedCase::Obstacle);
        let parked = Blocking { speed: 0.0, ..lead };
        assert_eq!(plan_speed(Some(&parked), 5.0, 5.0, &c).case, SpeedCase::Obstacle);
        assert_eq!(plan_speed(None, 5.0, 5.0, &c).case, SpeedCase::Normal);
    }
}
