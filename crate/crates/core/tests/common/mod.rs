//! Independent reference implementations used by the property and acceptance
//! tests. None of these call into the library code they check.

#![allow(dead_code)]

use lidarplan::geometry::Vec2;
use nalgebra::{DMatrix, DVector};

/// Minimum total cost over all injective row-to-column assignments of
/// size `min(rows, cols)`.
pub fn brute_force_min_cost(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    if rows == 0 {
        return 0.0;
    }
    let cols = cost[0].len();
    let k = rows.min(cols);
    fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, left: usize, acc: f64, best: &mut f64) {
        if left == 0 {
            *best = best.min(acc);
            return;
        }
        if row == cost.len() || cost.len() - row < left {
            return;
        }
        // Leave this row unassigned.
        go(cost, row + 1, used, left, acc, best);
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(cost, row + 1, used, left - 1, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, 0, &mut vec![false; cols], k, 0.0, &mut best);
    best
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Vec2, a: Vec2, b: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test by orientation signs.
pub fn segments_touch(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// True when any edge of `path` meets any of `bounds`.
pub fn polyline_hits(path: &[Vec2], bounds: &[(Vec2, Vec2)]) -> bool {
    path.windows(2)
        .any(|w| bounds.iter().any(|&(a, b)| segments_touch(w[0], w[1], a, b)))
}

/// Pop waypoints off the end while any of a bound's segments crosses the
/// remaining polyline, bound after bound. Returns the kept length and the
/// index of the last bound group that forced a pop.
pub fn pop_loop(path: &[Vec2], groups: &[Vec<(Vec2, Vec2)>]) -> (usize, Option<usize>) {
    let mut len = path.len();
    let mut last = None;
    for (g, segs) in groups.iter().enumerate() {
        for &seg in segs {
            while len > 1 && polyline_hits(&path[..len], &[seg]) {
                len -= 1;
                last = Some(g);
            }
        }
    }
    (len, last)
}

/// Textbook linear Kalman filter.
pub struct Kalman {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl Kalman {
    pub fn predict(&mut self, f: &DMatrix<f64>, q: &DMatrix<f64>) {
        self.x = f * &self.x;
        self.p = f * &self.p * f.transpose() + q;
    }

    pub fn update(&mut self, h: &DMatrix<f64>, r: &DMatrix<f64>, z: &DVector<f64>) {
        let s = h * &self.p * h.transpose() + r;
        let k = &self.p * h.transpose() * s.try_inverse().expect("invertible innovation");
        self.x = &self.x + &k * (z - h * &self.x);
        let i = DMatrix::identity(self.x.len(), self.x.len());
        self.p = (i - &k * h) * &self.p;
    }
}

/// Point `m` in the frame of a pose at `e` with heading `yaw` (x forward).
pub fn to_frame(e: Vec2, yaw: f64, m: Vec2) -> Vec2 {
    let d = m - e;
    Vec2::new(yaw.cos() * d.x + yaw.sin() * d.y, -yaw.sin() * d.x + yaw.cos() * d.y)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}
