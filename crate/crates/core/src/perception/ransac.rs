//! RANSAC ground plane segmentation.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::geometry::Vec3;
use crate::lidar::PointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub distance_threshold: f64,
    pub max_iterations: usize,
    pub min_inlier_fraction: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            distance_threshold: 0.15,
            max_iterations: 100,
            min_inlier_fraction: 0.2,
        }
    }
}

/// Plane `a x + b y + c z + d = 0` with unit normal and `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Plane {
    fn from_normal(n: Vec3, on: Vec3) -> Option<Self> {
        let len = n.norm();
        if !(len > 1e-12) {
            return None;
        }
        let mut n = n / len;
        if n.z < 0.0 || (n.z == 0.0 && (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0))) {
            n = -n;
        }
        Some(Self {
            a: n.x,
            b: n.y,
            c: n.z,
            d: -n.dot(&on),
        })
    }

    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.a, self.b, self.c)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        (self.a * p.x + self.b * p.y + self.c * p.z + self.d).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundSplit {
    pub ground: PointCloud,
    pub nonground: PointCloud,
    pub plane: Plane,
}

fn count_inliers(points: &[Vec3], plane: &Plane, thr: f64) -> usize {
    points.iter().filter(|p| plane.distance(p) <= thr).count()
}

fn least_squares_plane(points: &[Vec3]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    Plane::from_normal(eig.eigenvectors.column(imin).into_owned(), centroid)
}

/// Split `cloud` into ground inliers and the rest.
pub fn ransac_ground<R: Rng + ?Sized>(
    cloud: &PointCloud,
    params: &RansacParams,
    rng: &mut R,
) -> Result<GroundSplit, PerceptionError> {
    let pts = &cloud.points;
    let n = pts.len();
    if n < 3 {
        return Err(PerceptionError::DegenerateCloud(format!("{n} points, need at least 3")));
    }
    let thr = params.distance_threshold;
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.max_iterations {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for m in [i.min(j), i.max(j)] {
            if k >= m {
                k += 1;
            }
        }
        let normal = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
        let Some(plane) = Plane::from_normal(normal, pts[i]) else {
            continue;
        };
        let count = count_inliers(pts, &plane, thr);
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, plane));
        }
    }
    let Some((count, mut plane)) = best else {
        return Err(PerceptionError::DegenerateCloud("no non-degenerate sample".into()));
    };
    if (count as f64) < params.min_inlier_fraction * n as f64 {
        return Err(PerceptionError::DegenerateCloud(format!(
            "best plane has {count}/{n} inliers"
        )));
    }
    // Least-squares refinement over the consensus set.
    let inliers: Vec<Vec3> = pts.iter().filter(|p| plane.distance(p) <= thr).copied().collect();
    if let Some(refined) = least_squares_plane(&inliers) {
        if count_inliers(pts, &refined, thr) >= count {
            plane = refined;
        }
    }
    let (ground, nonground): (Vec<Vec3>, Vec<Vec3>) = pts.iter().partition(|p| plane.distance(p) <= thr);
    Ok(GroundSplit {
        ground: cloud.with_points(ground),
        nonground: cloud.with_points(nonground),
        plane,
    })
}
