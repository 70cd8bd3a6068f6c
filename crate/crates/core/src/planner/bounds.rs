//! Velocity-extended vehicle bounds and line-intersection collision checking.

use serde::{Deserialize, Serialize};

use crate::geometry::{segment_intersect, Segment, Vec2};

/// A vehicle as the planner sees it, in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleInfo {
    pub corners: [Vec2; 4],
    pub position: Vec2,
    pub yaw: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VBound {
    pub vehicle_index: usize,
    /// `[c1->c2, c1->c3, c2->c4, c3->c4]`
    pub segments: Vec<Segment>,
    pub speed: f64,
    pub yaw: f64,
    pub position: Vec2,
}

/// Extended rectangle corners `(c1, c2, c3, c4)`: `c1, c2` are the front
/// corners moved by the travel over `t_est`, `c3` is the rear corner beside
/// `c1`, `c4` the one beside `c2`.
pub fn extended_corners(corners: &[Vec2; 4], yaw: f64, speed: f64, t_est: f64) -> [Vec2; 4] {
    let heading = Vec2::new(yaw.cos(), yaw.sin());
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&a, &b| {
        heading
            .dot(&corners[b])
            .total_cmp(&heading.dot(&corners[a]))
            .then(a.cmp(&b))
    });
    let (f1, f2) = (order[0], order[1]);
    // Rear neighbour of each front corner: the rear corner sharing its side.
    let rear: Vec<usize> = order[2..].to_vec();
    let lateral = |i: usize| Vec2::new(-heading.y, heading.x).dot(&corners[i]);
    let (r1, r2) = if (lateral(rear[0]) - lateral(f1)).abs() <= (lateral(rear[1]) - lateral(f1)).abs() {
        (rear[0], rear[1])
    } else {
        (rear[1], rear[0])
    };
    let ext = Vec2::new(yaw.cos() * speed * t_est, yaw.sin() * speed * t_est);
    [corners[f1] + ext, corners[f2] + ext, corners[r1], corners[r2]]
}

pub fn extend_bounds(index: usize, vehicle: &VehicleInfo, t_est: f64) -> VBound {
    let [c1, c2, c3, c4] = extended_corners(&vehicle.corners, vehicle.yaw, vehicle.speed, t_est);
    VBound {
        vehicle_index: index,
        segments: vec![
            Segment::new(c1, c2),
            Segment::new(c1, c3),
            Segment::new(c2, c4),
            Segment::new(c3, c4),
        ],
        speed: vehicle.speed,
        yaw: vehicle.yaw,
        position: vehicle.position,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectResult {
    pub vehicle_index: Option<usize>,
    pub distance: Option<f64>,
    /// Length of the collision-free prefix of the input trajectory.
    pub keep: usize,
}

/// Index of the first polyline segment of `points[..len]` hit by `bound`.
fn first_hit(points: &[Vec2], len: usize, bound: &Segment) -> Option<usize> {
    (1..len).find(|&i| segment_intersect(bound, &Segment::new(points[i - 1], points[i])).is_some())
}

/// Truncate the trajectory from its far end until no bound crosses it.
///
/// Each intersecting bound removes waypoints from the end one at a time; this
/// is done in one step by cutting right before the first crossed segment,
/// which leaves the same prefix as repeated removal.
pub fn intersect_check(rwp: &[Vec2], bounds: &[VBound]) -> IntersectResult {
    assert!(!rwp.is_empty(), "trajectory must be nonempty");
    let mut keep = rwp.len();
    let mut vehicle_index = None;
    let mut distance = None;
    for vb in bounds {
        for bound in &vb.segments {
            // With one point left there are no lines and the loop stops.
            if let Some(i) = first_hit(rwp, keep, bound) {
                keep = i;
                vehicle_index = Some(vb.vehicle_index);
                distance = Some(bound.distance_to_point(rwp[0]));
            }
        }
    }
    IntersectResult {
        vehicle_index,
        distance,
        keep,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionCheck {
    pub bounds: Vec<VBound>,
    pub blocking: Option<usize>,
    pub distance: Option<f64>,
    pub speed: Option<f64>,
    pub yaw: Option<f64>,
    pub keep: usize,
}

pub fn generate_collision_free_path(vehicles: &[VehicleInfo], rwp: &[Vec2], t_est: f64) -> CollisionCheck {
    let bounds: Vec<VBound> = vehicles
        .iter()
        .enumerate()
        .map(|(i, v)| extend_bounds(i, v, t_est))
        .collect();
    let r = intersect_check(rwp, &bounds);
    let info = r.vehicle_index.map(|i| &vehicles[i]);
    CollisionCheck {
        blocking: r.vehicle_index,
        distance: r.distance,
        speed: info.map(|v| v.speed),
        yaw: info.map(|v| v.yaw),
        keep: r.keep,
        bounds,
    }
}
