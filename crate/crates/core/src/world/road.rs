//! Polyline road geometry with arc-length parameterization.

use crate::geometry::{wrap_angle, Vec2};

/// A polyline with cumulative arc length per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    cum_s: Vec<f64>,
}

impl Polyline {
    /// Builds a polyline, dropping consecutive duplicate vertices.
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if pts.last().is_none_or(|q: &Vec2| (p - q).norm() > 1e-9) {
                pts.push(p);
            }
        }
        let mut cum_s = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        for (i, p) in pts.iter().enumerate() {
            if i > 0 {
                acc += (p - pts[i - 1]).norm();
            }
            cum_s.push(acc);
        }
        Self { points: pts, cum_s }
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn cum_s(&self) -> &[f64] {
        &self.cum_s
    }

    pub fn length(&self) -> f64 {
        self.cum_s.last().copied().unwrap_or(0.0)
    }

    fn segment_index(&self, s: f64) -> usize {
        let n = self.points.len();
        if n < 2 {
            return 0;
        }
        match self.cum_s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Position and tangent heading at arc length `s`, clamped to the ends.
    pub fn pose_at(&self, s: f64) -> (Vec2, f64) {
        match self.points.len() {
            0 => (Vec2::zeros(), 0.0),
            1 => (self.points[0], 0.0),
            _ => {
                let s = s.clamp(0.0, self.length());
                let i = self.segment_index(s);
                let a = self.points[i];
                let b = self.points[i + 1];
                let seg_len = self.cum_s[i + 1] - self.cum_s[i];
                let t = ((s - self.cum_s[i]) / seg_len).clamp(0.0, 1.0);
                let d = b - a;
                (a + d * t, d.y.atan2(d.x))
            }
        }
    }

    /// Arc length of the closest point to `p` restricted to `[s_lo, s_hi]`.
    pub fn project(&self, p: Vec2, s_lo: f64, s_hi: f64) -> f64 {
        if self.points.len() < 2 {
            return 0.0;
        }
        let s_lo = s_lo.max(0.0);
        let s_hi = s_hi.min(self.length());
        let i0 = self.segment_index(s_lo);
        let i1 = self.segment_index(s_hi);
        let mut best = (f64::INFINITY, s_lo);
        for i in i0..=i1 {
            let a = self.points[i];
            let d = self.points[i + 1] - a;
            let len2 = d.norm_squared();
            let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
            let s = (self.cum_s[i] + t * len2.sqrt()).clamp(s_lo, s_hi);
            let q = self.pose_at(s).0;
            let dist = (q - p).norm();
            if dist < best.0 {
                best = (dist, s);
            }
        }
        best.1
    }

    /// Signed lateral offset of `p` (positive to the left) relative to arc length `s`.
    pub fn lateral_offset(&self, p: Vec2, s: f64) -> f64 {
        let (q, yaw) = self.pose_at(s);
        let n = Vec2::new(-yaw.sin(), yaw.cos());
        (p - q).dot(&n)
    }

    /// Offset copy; positive `offset` shifts to the left of travel.
    pub fn offset(&self, offset: f64) -> Polyline {
        let n = self.points.len();
        if n < 2 {
            return self.clone();
        }
        let normal = |i: usize| {
            let d = (self.points[i + 1] - self.points[i]).normalize();
            Vec2::new(-d.y, d.x)
        };
        let closed = (self.points[0] - self.points[n - 1]).norm() < 1e-6;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (n_prev, n_next) = if i == 0 {
                let next = normal(0);
                (if closed { normal(n - 2) } else { next }, next)
            } else if i == n - 1 {
                let prev = normal(n - 2);
                (prev, if closed { normal(0) } else { prev })
            } else {
                (normal(i - 1), normal(i))
            };
            let bis = n_prev + n_next;
            let m = if bis.norm() < 1e-9 {
                n_next
            } else {
                let b = bis.normalize();
                b / b.dot(&n_next).max(0.2)
            };
            out.push(self.points[i] + m * offset);
        }
        Polyline::new(out)
    }

    pub fn reversed(&self) -> Polyline {
        Polyline::new(self.points.iter().rev().copied().collect())
    }

    /// Tangent heading change integrated along the polyline (diagnostic).
    pub fn total_turn(&self) -> f64 {
        let mut acc = 0.0;
        for i in 1..self.points.len().saturating_sub(1) {
            let d0 = self.points[i] - self.points[i - 1];
            let d1 = self.points[i + 1] - self.points[i];
            acc += wrap_angle(d1.y.atan2(d1.x) - d0.y.atan2(d0.x));
        }
        acc
    }
}

/// A drivable lane: centerline, width, optional speed limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub centerline: Polyline,
    pub width: f64,
    pub closed: bool,
    pub speed_limit: Option<f64>,
}

impl Lane {
    pub fn length(&self) -> f64 {
        self.centerline.length()
    }

    /// Wraps `s` on closed lanes, clamps on open ones.
    pub fn normalize_s(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.length())
        } else {
            s.clamp(0.0, self.length())
        }
    }
}

/// Route driven by the ego: lanes concatenated end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub path: Polyline,
    /// `(start_s, speed_limit)` per route piece, ordered by `start_s`.
    limits: Vec<(f64, Option<f64>)>,
}

impl Route {
    pub fn from_lanes(lanes: &[&Lane]) -> Self {
        let mut points = Vec::new();
        let mut limits = Vec::new();
        for lane in lanes {
            let start = if points.is_empty() {
                0.0
            } else {
                Polyline::new(points.clone()).length()
            };
            limits.push((start, lane.speed_limit));
            points.extend_from_slice(lane.centerline.points());
        }
        Self {
            path: Polyline::new(points),
            limits,
        }
    }

    pub fn length(&self) -> f64 {
        self.path.length()
    }

    pub fn speed_limit_at(&self, s: f64) -> Option<f64> {
        self.limits
            .iter()
            .rev()
            .find(|(start, _)| *start <= s)
            .and_then(|(_, lim)| *lim)
    }
}

/// Straight/arc builder used by scenario files.
pub fn build_from_segments(start: Vec2, heading: f64, segments: &[(f64, Option<f64>)], step: f64) -> Vec<Vec2> {
    let mut pts = vec![start];
    let mut p = start;
    let mut yaw = heading;
    for &(len_or_angle, radius) in segments {
        match radius {
            None => {
                let n = (len_or_angle / step).ceil().max(1.0) as usize;
                let ds = len_or_angle / n as f64;
                for _ in 0..n {
                    p += Vec2::new(yaw.cos(), yaw.sin()) * ds;
                    pts.push(p);
                }
            }
            Some(r) => {
                // Positive angle turns left.
                let angle = len_or_angle;
                let arc = r * angle.abs();
                let n = (arc / step).ceil().max(1.0) as usize;
                let dphi = angle / n as f64;
                let sign = angle.signum();
                let center = p + Vec2::new(-yaw.sin(), yaw.cos()) * (r * sign);
                for _ in 0..n {
                    yaw += dphi;
                    p = center - Vec2::new(-yaw.sin(), yaw.cos()) * (r * sign);
                    pts.push(p);
                }
            }
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn pose_and_projection_on_straight() {
        let pl = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]);
        let (p, yaw) = pl.pose_at(2.5);
        assert_eq!(p, Vec2::new(2.5, 0.0));
        assert_eq!(yaw, 0.0);
        let s = pl.project(Vec2::new(4.0, 1.0), 0.0, 10.0);
        assert!((s - 4.0).abs() < 1e-12);
        assert!((pl.lateral_offset(Vec2::new(4.0, 1.0), s) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn arc_builder_closes_a_circle() {
        let pts = build_from_segments(Vec2::zeros(), 0.0, &[(2.0 * PI, Some(10.0))], 0.5);
        let last = *pts.last().unwrap();
        assert!(last.norm() < 1e-9);
        let pl = Polyline::new(pts);
        assert!((pl.length() - 2.0 * PI * 10.0).abs() < 0.05);
        assert!((pl.total_turn() - 2.0 * PI).abs() < 0.1);
    }

    #[test]
    fn offset_of_straight() {
        let pl = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)]);
        let o = pl.offset(3.5);
        assert_eq!(o.points()[0], Vec2::new(0.0, 3.5));
        assert_eq!(o.points()[1], Vec2::new(10.0, 3.5));
    }
}
