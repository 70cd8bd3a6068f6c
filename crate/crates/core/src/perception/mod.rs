//! Per-frame vehicle detection from a LiDAR cloud.

pub mod classify;
pub mod dbscan;
pub mod lshape;
pub mod preprocess;
pub mod ransac;

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classify::{rule_classify, ClassifierConfig, RuleOutcome};
pub use dbscan::{dbscan_cluster, Clustering};
pub use lshape::{complete_single_face, l_shape_fit, LShapeFit};
pub use preprocess::{crop_roi, voxel_downsample};
pub use ransac::{ransac_ground, GroundSplit, Plane, RansacParams};

use crate::geometry::{OrientedBox, Vec2};
use crate::lidar::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),
    #[error("degenerate cluster: hull has {0} vertices")]
    DegenerateCluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanParams {
    pub epsilon: f64,
    pub min_points: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            min_points: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub roi_radius: f64,
    pub voxel_size: f64,
    /// Heading step of the L-shape search, degrees.
    pub lshape_step_deg: f64,
    pub ransac: RansacParams,
    pub dbscan: DbscanParams,
    pub classifier: ClassifierConfig,
    /// Typical vehicle `(length, width)` used to complete single-face fits.
    pub size_prior: [f64; 2],
    /// Fits thinner than this are treated as a single visible face, meters.
    pub thin_face: f64,
    /// Points this close below a cluster's highest point are left out of the
    /// rectangle fit so roof returns do not widen a single visible face.
    pub roof_band: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            roi_radius: 20.0,
            voxel_size: 0.15,
            lshape_step_deg: 1.0,
            ransac: RansacParams::default(),
            dbscan: DbscanParams::default(),
            classifier: ClassifierConfig::default(),
            size_prior: [4.6, 1.9],
            thin_face: 1.0,
            roof_band: 0.15,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("roi_radius", self.roi_radius),
            ("voxel_size", self.voxel_size),
            ("lshape_step_deg", self.lshape_step_deg),
            ("ransac.distance_threshold", self.ransac.distance_threshold),
            ("ransac.min_inlier_fraction", self.ransac.min_inlier_fraction),
            ("dbscan.epsilon", self.dbscan.epsilon),
            ("size_prior.length", self.size_prior[0]),
            ("size_prior.width", self.size_prior[1]),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0"));
            }
        }
        if !(self.thin_face >= 0.0 && self.roof_band >= 0.0) {
            return Err("thin_face and roof_band must be >= 0".into());
        }
        if self.ransac.max_iterations == 0 {
            return Err("ransac.max_iterations must be > 0".into());
        }
        if self.ransac.min_inlier_fraction > 1.0 {
            return Err("ransac.min_inlier_fraction must be <= 1".into());
        }
        if self.dbscan.min_points == 0 {
            return Err("dbscan.min_points must be > 0".into());
        }
        if self.lshape_step_deg > 90.0 {
            return Err("lshape_step_deg must be <= 90".into());
        }
        self.classifier.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedVehicle {
    pub center: Vec2,
    pub yaw: f64,
    /// `(length, width)`
    pub extent: [f64; 2],
    pub corners: [Vec2; 4],
    pub n_points: usize,
    pub frame_id: u64,
}

impl DetectedVehicle {
    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(self.center, self.yaw, self.extent[0], self.extent[1])
    }

    /// Rectangle corner closest to the sensor.
    pub fn anchor_corner(&self) -> Vec2 {
        *self
            .corners
            .iter()
            .min_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))
            .expect("four corners")
    }
}

/// Wall-clock microseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub crop_us: f64,
    pub voxel_us: f64,
    pub ground_us: f64,
    pub cluster_us: f64,
    pub fit_us: f64,
}

impl StageTimings {
    pub fn total_us(&self) -> f64 {
        self.crop_us + self.voxel_us + self.ground_us + self.cluster_us + self.fit_us
    }
}

/// Point counts after each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub raw: usize,
    pub cropped: usize,
    pub voxelized: usize,
    pub nonground: usize,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_id: u64,
    pub detections: Vec<DetectedVehicle>,
    /// Set when ground removal failed and no detection was attempted.
    pub skipped: bool,
    pub timings: StageTimings,
    pub counts: StageCounts,
}

fn micros(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e6
}

/// Drops detections whose measured points sit inside the box of a
/// better-supported detection. Close vehicles can split into a face cluster
/// plus a few roof rings, and completion would turn each ring into a car.
fn suppress_fragments(mut candidates: Vec<(Vec2, DetectedVehicle)>) -> Vec<DetectedVehicle> {
    candidates.sort_by_key(|c| std::cmp::Reverse(c.1.n_points));
    let mut kept: Vec<DetectedVehicle> = Vec::with_capacity(candidates.len());
    for (raw, d) in candidates {
        let inside = kept
            .iter()
            .any(|k| OrientedBox::new(k.center, k.yaw, k.extent[0], k.extent[1]).contains(raw));
        if !inside {
            kept.push(d);
        }
    }
    kept
}

/// Run the full detection pipeline on one cloud.
pub fn detect_frame<R: Rng + ?Sized>(cloud: &PointCloud, config: &PerceptionConfig, rng: &mut R) -> FrameDetections {
    let mut timings = StageTimings::default();
    let mut counts = StageCounts {
        raw: cloud.len(),
        ..Default::default()
    };
    let frame_id = cloud.frame_id;
    let empty = |timings, counts| FrameDetections {
        frame_id,
        detections: Vec::new(),
        skipped: true,
        timings,
        counts,
    };

    let t = Instant::now();
    let cropped = crop_roi(cloud, config.roi_radius);
    timings.crop_us = micros(t);
    counts.cropped = cropped.len();

    let t = Instant::now();
    let voxels = voxel_downsample(&cropped, config.voxel_size);
    timings.voxel_us = micros(t);
    counts.voxelized = voxels.len();

    let t = Instant::now();
    let split = ransac_ground(&voxels, &config.ransac, rng);
    timings.ground_us = micros(t);
    let split = match split {
        Ok(s) => s,
        Err(_) => return empty(timings, counts),
    };
    counts.nonground = split.nonground.len();

    let t = Instant::now();
    let clustering = dbscan_cluster(&split.nonground.points, config.dbscan.epsilon, config.dbscan.min_points);
    timings.cluster_us = micros(t);
    counts.clusters = clustering.clusters.len();

    let t = Instant::now();
    let mut candidates = Vec::new();
    let mut bev = Vec::new();
    for cluster in &clustering.clusters {
        let n = cluster.len();
        if n < config.classifier.points[0] || n > config.classifier.points[1] {
            continue;
        }
        let pts = &split.nonground.points;
        let top = cluster.iter().map(|&i| pts[i].z).fold(f64::NEG_INFINITY, f64::max);
        bev.clear();
        bev.extend(
            cluster
                .iter()
                .filter(|&&i| pts[i].z < top - config.roof_band)
                .map(|&i| pts[i].xy()),
        );
        if bev.len() < 3 {
            bev.clear();
            bev.extend(cluster.iter().map(|&i| pts[i].xy()));
        }
        let Ok(fit) = l_shape_fit(&bev, config.lshape_step_deg) else {
            continue;
        };
        // Thickness below the voxel grid is not resolvable; a noiseless flat face measures zero.
        if rule_classify(&config.classifier, fit.length, fit.width.max(config.voxel_size), n) {
            let raw_center = fit.center;
            let fit = complete_single_face(&fit, config.size_prior, config.thin_face);
            candidates.push((
                raw_center,
                DetectedVehicle {
                    center: fit.center,
                    yaw: fit.yaw,
                    extent: [fit.length, fit.width],
                    corners: fit.corners,
                    n_points: n,
                    frame_id,
                },
            ));
        }
    }
    let detections = suppress_fragments(candidates);
    timings.fit_us = micros(t);

    FrameDetections {
        frame_id,
        detections,
        skipped: false,
        timings,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(center: Vec2, n_points: usize) -> DetectedVehicle {
        let b = OrientedBox::new(center, 0.0, 4.6, 1.9);
        DetectedVehicle {
            center,
            yaw: 0.0,
            extent: [4.6, 1.9],
            corners: b.corners(),
            n_points,
            frame_id: 0,
        }
    }

    #[test]
    fn roof_ring_inside_a_car_is_dropped() {
        let car = det(Vec2::new(7.0, 0.0), 300);
        let ring = det(Vec2::new(9.5, 0.0), 15);
        let other = det(Vec2::new(7.0, 3.5), 12);
        let kept = suppress_fragments(vec![
            (Vec2::new(7.2, 0.0), ring),
            (Vec2::new(4.8, 0.0), car.clone()),
            (Vec2::new(5.0, 3.5), other.clone()),
        ]);
        assert_eq!(kept, vec![car, other]);
    }

    #[test]
    fn default_config_is_valid() {
        assert_eq!(PerceptionConfig::default().validate(), Ok(()));
        let bad = PerceptionConfig {
            size_prior: [4.6, 0.0],
            ..PerceptionConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
