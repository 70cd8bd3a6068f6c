//! Planar geometry shared by perception, planning and evaluation.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Wrap an angle into `[-π, π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r -= 2.0 * PI;
    }
    r
}

/// Wrap an angle into `[-π/2, π/2)` (orientation of an undirected axis).
pub fn wrap_half_turn(a: f64) -> f64 {
    let h = PI / 2.0;
    let mut r = (a + h).rem_euclid(PI) - h;
    if r >= h {
        r -= PI;
    }
    r
}

/// 2D cross product of `(q - p) x (r - p)`. Positive for a counter-clockwise turn.
#[inline]
pub fn orientation(p: Vec2, q: Vec2, r: Vec2) -> f64 {
    (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Euclidean distance from `p` to the closest point of the segment.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let d = self.b - self.a;
        let len2 = d.norm_squared();
        if len2 == 0.0 {
            return (p - self.a).norm();
        }
        let t = ((p - self.a).dot(&d) / len2).clamp(0.0, 1.0);
        (self.a + d * t - p).norm()
    }
}

fn sign_eps(v: f64, scale: f64) -> i8 {
    let eps = 1e-12 * scale.max(1.0);
    if v > eps {
        1
    } else if v < -eps {
        -1
    } else {
        0
    }
}

// Assumes `p` is collinear with `s`.
fn within_box(s: &Segment, p: Vec2, eps: f64) -> bool {
    p.x >= s.a.x.min(s.b.x) - eps
        && p.x <= s.a.x.max(s.b.x) + eps
        && p.y >= s.a.y.min(s.b.y) - eps
        && p.y <= s.a.y.max(s.b.y) + eps
}

/// Intersection of two closed segments.
///
/// Proper crossings and touching contacts both report the contact point. For
/// collinear overlap the overlap endpoint nearest `a.a` is returned.
pub fn segment_intersect(a: &Segment, b: &Segment) -> Option<Vec2> {
    let scale = a.length() * b.length();
    let d1 = orientation(b.a, b.b, a.a);
    let d2 = orientation(b.a, b.b, a.b);
    let d3 = orientation(a.a, a.b, b.a);
    let d4 = orientation(a.a, a.b, b.b);
    let (s1, s2, s3, s4) = (
        sign_eps(d1, scale),
        sign_eps(d2, scale),
        sign_eps(d3, scale),
        sign_eps(d4, scale),
    );

    if s1 * s2 < 0 && s3 * s4 < 0 {
        let t = d1 / (d1 - d2);
        return Some(a.a + (a.b - a.a) * t);
    }

    if s1 == 0 && s2 == 0 && s3 == 0 && s4 == 0 {
        return collinear_overlap(a, b);
    }

    // Touching contact: at most one distinct point when not collinear.
    let eps = 1e-9;
    if s1 == 0 && within_box(b, a.a, eps) {
        return Some(a.a);
    }
    if s2 == 0 && within_box(b, a.b, eps) {
        return Some(a.b);
    }
    if s3 == 0 && within_box(a, b.a, eps) {
        return Some(b.a);
    }
    if s4 == 0 && within_box(a, b.b, eps) {
        return Some(b.b);
    }
    None
}

fn collinear_overlap(a: &Segment, b: &Segment) -> Option<Vec2> {
    let d = a.b - a.a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        // `a` is a point: it intersects iff it lies on `b`.
        let bl = b.b - b.a;
        let bl2 = bl.norm_squared();
        if bl2 == 0.0 {
            return ((a.a - b.a).norm() <= 1e-9).then_some(a.a);
        }
        let t = (a.a - b.a).dot(&bl) / bl2;
        return (-1e-12..=1.0 + 1e-12).contains(&t).then_some(a.a);
    }
    let ta = (b.a - a.a).dot(&d) / len2;
    let tb = (b.b - a.a).dot(&d) / len2;
    let lo = ta.min(tb).max(0.0);
    let hi = ta.max(tb).min(1.0);
    if lo > hi + 1e-12 {
        return None;
    }
    if lo <= 0.0 {
        return Some(a.a);
    }
    // Snap to the exact endpoint of `b` when it is the overlap start.
    if ta <= tb {
        Some(b.a)
    } else {
        Some(b.b)
    }
}

/// Convex hull by monotone chain, counter-clockwise, without collinear vertices.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() * 2);
    for &p in &pts {
        while hull.len() >= 2 && orientation(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && orientation(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Signed area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

/// Clip `subject` against the convex counter-clockwise polygon `clip`.
pub fn clip_convex(subject: &[Vec2], clip: &[Vec2]) -> Vec<Vec2> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = orientation(e0, e1, cur) >= 0.0;
            let prev_in = orientation(e0, e1, prev) >= 0.0;
            if cur_in {
                if !prev_in {
                    output.push(line_cross(prev, cur, e0, e1));
                }
                output.push(cur);
            } else if prev_in {
                output.push(line_cross(prev, cur, e0, e1));
            }
        }
    }
    output
}

fn line_cross(p: Vec2, q: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let dp = orientation(a, b, p);
    let dq = orientation(a, b, q);
    let denom = dp - dq;
    if denom == 0.0 {
        return p;
    }
    p + (q - p) * (dp / denom)
}

/// Pose in the plane: position plus heading (counter-clockwise from +x).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Express a map point in this pose's local frame (x along heading).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Vec2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// Inverse of [`Pose2::to_local`].
    pub fn to_global(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        Vec2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }
}

/// Oriented rectangle in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Vec2,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Vec2, yaw: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            yaw,
            length,
            width,
        }
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::new(self.yaw.cos(), self.yaw.sin())
    }

    /// Corners counter-clockwise starting at front-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let f = self.heading() * (self.length / 2.0);
        let l = Vec2::new(-self.yaw.sin(), self.yaw.cos()) * (self.width / 2.0);
        let c = self.center;
        [c + f + l, c - f + l, c - f - l, c + f - l]
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.center;
        let (s, c) = self.yaw.sin_cos();
        let lx = c * d.x + s * d.y;
        let ly = -s * d.x + c * d.y;
        lx.abs() <= self.length / 2.0 && ly.abs() <= self.width / 2.0
    }

    /// Minimum distance from `p` to the rectangle boundary, zero when inside.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        let c = self.corners();
        (0..4)
            .map(|i| Segment::new(c[i], c[(i + 1) % 4]).distance_to_point(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn transformed(&self, pose: &Pose2) -> Self {
        Self {
            center: pose.to_local(self.center),
            yaw: wrap_angle(self.yaw - pose.yaw),
            ..*self
        }
    }

    /// Separating-axis overlap test (touching counts as overlap).
    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let a = self.corners();
        let b = other.corners();
        let axes = [
            self.heading(),
            Vec2::new(-self.yaw.sin(), self.yaw.cos()),
            other.heading(),
            Vec2::new(-other.yaw.sin(), other.yaw.cos()),
        ];
        for ax in axes {
            let (amin, amax) = project(&a, ax);
            let (bmin, bmax) = project(&b, ax);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
        true
    }

    /// Bird's-eye intersection over union.
    pub fn iou(&self, other: &OrientedBox) -> f64 {
        let inter = polygon_area(&clip_convex(&self.corners(), &other.corners())).abs();
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            (inter / union).clamp(0.0, 1.0)
        }
    }
}

fn project(corners: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
        let v = c.dot(&axis);
        (lo.min(v), hi.max(v))
    })
}
