//! Quadratic B-spline smoothing of ego-frame waypoints and fixed-step
//! resampling along the curve.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoTrajectory {
    pub points: Vec<Vec2>,
    /// Cumulative chord length at each point.
    pub cum_arc: Vec<f64>,
    /// Set when the input had too few points to build a spline and was
    /// passed through unchanged.
    pub passthrough: bool,
}

impl EgoTrajectory {
    pub fn from_points(points: Vec<Vec2>, passthrough: bool) -> Self {
        let mut cum_arc = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc += (p - points[i - 1]).norm();
            }
            cum_arc.push(acc);
        }
        Self {
            points,
            cum_arc,
            passthrough,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.cum_arc.last().copied().unwrap_or(0.0)
    }

    pub fn prefix(&self, n: usize) -> Self {
        Self {
            points: self.points[..n].to_vec(),
            cum_arc: self.cum_arc[..n].to_vec(),
            passthrough: self.passthrough,
        }
    }
}

/// Clamped quadratic B-spline with the waypoints as control points, knots
/// from cumulative chord length.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticBSpline {
    control: Vec<Vec2>,
    knots: Vec<f64>,
}

impl QuadraticBSpline {
    /// Needs at least 3 control points.
    pub fn new(control: &[Vec2]) -> Option<Self> {
        let n = control.len();
        if n < 3 {
            return None;
        }
        let mut s = vec![0.0; n];
        for i in 1..n {
            s[i] = s[i - 1] + (control[i] - control[i - 1]).norm();
        }
        if !(s[n - 1] > 0.0) {
            return None;
        }
        let mut knots = vec![s[0]; 3];
        for j in 1..n - 2 {
            knots.push(0.5 * (s[j] + s[j + 1]));
        }
        knots.extend([s[n - 1]; 3]);
        Some(Self {
            control: control.to_vec(),
            knots,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// de Boor evaluation at `u`, clamped to the domain.
    pub fn eval(&self, u: f64) -> Vec2 {
        let (lo, hi) = self.domain();
        let u = u.clamp(lo, hi);
        let n = self.control.len();
        // Span k with knots[k] <= u < knots[k+1], k in [2, n-1].
        let mut k = 2;
        while k < n - 1 && u >= self.knots[k + 1] {
            k += 1;
        }
        let t = &self.knots;
        let mut d = [self.control[k - 2], self.control[k - 1], self.control[k]];
        for r in 1..=2 {
            for j in (r..=2).rev() {
                let i = k - 2 + j;
                let denom = t[i + 3 - r] - t[i];
                let a = if denom > 0.0 { (u - t[i]) / denom } else { 0.0 };
                d[j] = d[j - 1] * (1.0 - a) + d[j] * a;
            }
        }
        d[2]
    }
}

/// Resample a smoothed trajectory so that consecutive points are exactly
/// `t_s` apart (Euclidean), ending with the final endpoint.
pub fn bspline_resample(waypoints: &[Vec2], t_s: f64) -> EgoTrajectory {
    assert!(t_s > 0.0, "t_s must be positive");
    let Some(spline) = QuadraticBSpline::new(waypoints) else {
        return EgoTrajectory::from_points(waypoints.to_vec(), true);
    };
    let (lo, hi) = spline.domain();
    let end = spline.eval(hi);
    // Parameter steps well below t_s so each bracket holds one crossing.
    let du = (t_s * 0.25).min((hi - lo) / 8.0);
    let mut points = vec![spline.eval(lo)];
    let mut u = lo;
    loop {
        let cur = *points.last().unwrap();
        if (end - cur).norm() < t_s {
            break;
        }
        let mut a = u;
        let mut b = (u + du).min(hi);
        while (spline.eval(b) - cur).norm() < t_s && b < hi {
            a = b;
            b = (b + du).min(hi);
        }
        if (spline.eval(b) - cur).norm() < t_s {
            break;
        }
        for _ in 0..80 {
            let mid = 0.5 * (a + b);
            if (spline.eval(mid) - cur).norm() < t_s {
                a = mid;
            } else {
                b = mid;
            }
        }
        u = b;
        let p = spline.eval(u);
        let dir = p - cur;
        // Snap the step length to t_s exactly.
        points.push(cur + dir * (t_s / dir.norm()));
    }
    if (end - *points.last().unwrap()).norm() > 1e-9 {
        points.push(end);
    }
    EgoTrajectory::from_points(points, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_resample_on_line() {
        let wps: Vec<Vec2> = (0..6).map(|i| Vec2::new(2.0 * i as f64, 0.0)).collect();
        let tr = bspline_resample(&wps, 0.5);
        assert_eq!(tr.len(), 21);
        for (i, p) in tr.points.iter().enumerate() {
            assert!((p.x - 0.5 * i as f64).abs() < 1e-9, "{i}: {p:?}");
            assert!(p.y.abs() < 1e-9);
        }
    }

    #[test]
    fn two_points_pass_through() {
        let wps = vec![Vec2::zeros(), Vec2::new(2.0, 0.0)];
        let tr = bspline_resample(&wps, 0.5);
        assert!(tr.passthrough);
        assert_eq!(tr.points, wps);
    }

    #[test]
    fn endpoints_interpolated() {
        let wps = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(4.0, -1.0),
            Vec2::new(6.0, 3.0),
        ];
        let s = QuadraticBSpline::new(&wps).unwrap();
        let (lo, hi) = s.domain();
        assert!((s.eval(lo) - wps[0]).norm() < 1e-12);
        assert!((s.eval(hi) - wps[3]).norm() < 1e-12);
    }
}
