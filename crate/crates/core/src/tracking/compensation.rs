//! Ego-motion compensation of previous-frame observations.
//!
//! The transform works in a frame with x to the right and y forward. `theta`
//! is the rotation applied to old observations, i.e. the negated heading
//! change of the ego between the two frames; `d_ego = v_ego * dt` is the
//! distance travelled.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub theta_ego: f64,
    pub v_ego: f64,
    pub dt: f64,
}

impl EgoMotion {
    pub fn new(theta_ego: f64, v_ego: f64, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { theta_ego, v_ego, dt }
    }

    /// Motion between two ego poses sampled `dt` apart.
    pub fn between(prev: &Pose2, curr: &Pose2, dt: f64) -> Self {
        let heading_change = crate::geometry::wrap_angle(curr.yaw - prev.yaw);
        let dist = (curr.position() - prev.position()).norm();
        Self::new(-heading_change, dist / dt, dt)
    }

    pub fn d_ego(&self) -> f64 {
        self.v_ego * self.dt
    }

    /// `(Δx, Δy)` of the homogeneous transform.
    pub fn translation(&self) -> Vec2 {
        let d = self.d_ego();
        Vec2::new(-self.theta_ego.sin() * d, -self.theta_ego.cos() * d)
    }
}

/// Homogeneous transform `[[cos, -sin, Δx], [sin, cos, Δy], [0, 0, 1]]`.
pub fn transform_matrix(motion: &EgoMotion) -> nalgebra::Matrix3<f64> {
    let (s, c) = motion.theta_ego.sin_cos();
    let t = motion.translation();
    nalgebra::Matrix3::new(c, -s, t.x, s, c, t.y, 0.0, 0.0, 1.0)
}

/// Map previous-frame points (x right, y forward) into the current frame.
pub fn compensate_ego_motion(prev_points: &[Vec2], motion: &EgoMotion) -> Vec<Vec2> {
    let m = transform_matrix(motion);
    prev_points
        .iter()
        .map(|p| {
            let h = m * nalgebra::Vector3::new(p.x, p.y, 1.0);
            Vec2::new(h.x, h.y)
        })
        .collect()
}

/// Same transform for a point in the vehicle frame (x forward, y left).
pub fn compensate_vehicle_point(p: Vec2, motion: &EgoMotion) -> Vec2 {
    let right_fwd = Vec2::new(-p.y, p.x);
    let out = compensate_ego_motion(&[right_fwd], motion)[0];
    Vec2::new(out.y, -out.x)
}

/// Ego pose after `motion`, under the motion model the transform assumes.
///
/// Poses here use the x-right / y-forward convention: `yaw` rotates the
/// map-to-ego transform `A = R(-yaw)`, so a static map point `m` appears at
/// `A (m - e)`.
pub fn implied_next_pose(pose: &Pose2, motion: &EgoMotion) -> Pose2 {
    let yaw = pose.yaw - motion.theta_ego;
    // A_t^{-1} = R(yaw_t)
    let (s, c) = yaw.sin_cos();
    let d = motion.d_ego();
    let local = Vec2::new(motion.theta_ego.sin() * d, motion.theta_ego.cos() * d);
    let world = Vec2::new(c * local.x - s * local.y, s * local.x + c * local.y);
    Pose2::new(pose.x + world.x, pose.y + world.y, yaw)
}

/// Coordinates of map point `m` seen from `pose` (x-right / y-forward frame).
pub fn observe(pose: &Pose2, m: Vec2) -> Vec2 {
    let d = m - pose.position();
    let (s, c) = (-pose.yaw).sin_cos();
    Vec2::new(c * d.x - s * d.y, s * d.x + c * d.y)
}
