//! Search-based L-shape rectangle fitting on the BEV convex hull.

use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geometry::{convex_hull, wrap_half_turn, OrientedBox, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LShapeFit {
    pub center: Vec2,
    /// In `[-pi/2, pi/2)`, along the longer side.
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
    pub corners: [Vec2; 4],
}

impl LShapeFit {
    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(self.center, self.yaw, self.length, self.width)
    }
}

/// Closeness score of `points` against the two edges through the rectangle
/// corner nearest the sensor origin, for heading `theta`.
pub fn closeness_score(points: &[Vec2], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        let a = c * p.x + s * p.y;
        let b = -s * p.x + c * p.y;
        lo1 = lo1.min(a);
        hi1 = hi1.max(a);
        lo2 = lo2.min(b);
        hi2 = hi2.max(b);
    }
    let e1 = if lo1.abs() <= hi1.abs() { lo1 } else { hi1 };
    let e2 = if lo2.abs() <= hi2.abs() { lo2 } else { hi2 };
    points
        .iter()
        .map(|p| {
            let a = c * p.x + s * p.y;
            let b = -s * p.x + c * p.y;
            let d = (a - e1).abs().min((b - e2).abs());
            d * d
        })
        .sum()
}

/// Tight rectangle around `points` in the frame rotated by `theta`.
pub fn bounding_rectangle(points: &[Vec2], theta: f64) -> LShapeFit {
    let (s, c) = theta.sin_cos();
    let (mut lo1, mut hi1, mut lo2, mut hi2) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        let a = c * p.x + s * p.y;
        let b = -s * p.x + c * p.y;
        lo1 = lo1.min(a);
        hi1 = hi1.max(a);
        lo2 = lo2.min(b);
        hi2 = hi2.max(b);
    }
    let e1 = Vec2::new(c, s);
    let e2 = Vec2::new(-s, c);
    let center = e1 * (0.5 * (lo1 + hi1)) + e2 * (0.5 * (lo2 + hi2));
    let (l1, l2) = (hi1 - lo1, hi2 - lo2);
    let (yaw, length, width) = if l1 >= l2 {
        (theta, l1, l2)
    } else {
        (theta + std::f64::consts::FRAC_PI_2, l2, l1)
    };
    let b = OrientedBox::new(center, wrap_half_turn(yaw), length, width);
    LShapeFit {
        center,
        yaw: b.yaw,
        length,
        width,
        corners: b.corners(),
    }
}

/// Fit a rectangle to a BEV cluster, searching headings in `[0, 90°)` with
/// `step_deg` increments. Headings are scored on the cluster points; the hull
/// only bounds the rectangle. A thin single-face hull has four to six
/// vertices, which almost any heading fits with near-zero score.
pub fn l_shape_fit(points: &[Vec2], step_deg: f64) -> Result<LShapeFit, PerceptionError> {
    let hull = convex_hull(points);
    if hull.len() == 2 && points.len() >= 3 {
        // Collinear returns: a flat face seen without noise.
        let d = hull[1] - hull[0];
        return Ok(bounding_rectangle(&hull, d.y.atan2(d.x)));
    }
    if hull.len() < 3 {
        return Err(PerceptionError::DegenerateCluster(hull.len()));
    }
    let steps = (90.0 / step_deg).round().max(1.0) as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..steps {
        let theta = (k as f64 * step_deg).to_radians();
        let score = closeness_score(points, theta);
        if score < best.0 {
            best = (score, theta);
        }
    }
    Ok(bounding_rectangle(&hull, best.1))
}

/// Complete a fit that saw only one face of a vehicle.
///
/// A fit thinner than `thin` is taken as a single face. Faces shorter than the
/// mean of the prior's sides are end faces (the vehicle extends away from the
/// sensor by the prior length); longer ones are side faces (it extends by the
/// prior width). Fits that are not thin are returned unchanged.
pub fn complete_single_face(fit: &LShapeFit, prior: [f64; 2], thin: f64) -> LShapeFit {
    if fit.width >= thin {
        return *fit;
    }
    let u = Vec2::new(fit.yaw.cos(), fit.yaw.sin());
    let mut n = Vec2::new(-u.y, u.x);
    if n.dot(&fit.center) < 0.0 {
        n = -n;
    }
    let near_edge = fit.center - n * (0.5 * fit.width);
    let end_face = fit.length < 0.5 * (prior[0] + prior[1]);
    let (heading, length, width, depth) = if end_face {
        let depth = prior[0].max(fit.width);
        (n, depth, fit.length, depth)
    } else {
        let depth = prior[1].max(fit.width);
        (u, fit.length, depth, depth)
    };
    let center = near_edge + n * (0.5 * depth);
    let (length, width, yaw) = if length >= width {
        (length, width, heading.y.atan2(heading.x))
    } else {
        (width, length, heading.y.atan2(heading.x) + std::f64::consts::FRAC_PI_2)
    };
    let b = OrientedBox::new(center, wrap_half_turn(yaw), length, width);
    LShapeFit {
        center,
        yaw: b.yaw,
        length,
        width,
        corners: b.corners(),
    }
}
