use std::collections::HashMap;

use crate::geometry::Vec3;
use crate::lidar::PointCloud;

/// Keep points whose bird's-eye distance from the origin is at most `roi_radius`.
pub fn crop_roi(cloud: &PointCloud, roi_radius: f64) -> PointCloud {
    let r2 = roi_radius * roi_radius;
    cloud.with_points(
        cloud
            .points
            .iter()
            .filter(|p| p.x * p.x + p.y * p.y <= r2)
            .copied()
            .collect(),
    )
}

/// Replace the points of every occupied voxel by their centroid.
///
/// Output order follows the first point seen in each voxel.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> PointCloud {
    assert!(voxel_size > 0.0, "voxel_size must be positive");
    let inv = 1.0 / voxel_size;
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::with_capacity(cloud.len() / 2);
    let mut sums: Vec<(Vec3, u32)> = Vec::new();
    for p in &cloud.points {
        let key = (
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        );
        let slot = *index.entry(key).or_insert_with(|| {
            sums.push((Vec3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p;
        sums[slot].1 += 1;
    }
    cloud.with_points(sums.into_iter().map(|(s, n)| s / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: Vec<Vec3>) -> PointCloud {
        PointCloud::new(points, 0.0, 0)
    }

    #[test]
    fn crop_keeps_inside_points_in_order() {
        let c = cloud(vec![
            Vec3::new(5.0, 0.0, 0.0),
            Vec3::new(0.0, 19.9, 1.0),
            Vec3::new(20.1, 0.0, 0.0),
        ]);
        let out = crop_roi(&c, 20.0);
        assert_eq!(out.points, c.points[..2].to_vec());
        assert!(crop_roi(&cloud(vec![]), 20.0).is_empty());
        let inside = cloud(vec![Vec3::new(1.0, 1.0, 1.0), Vec3::new(-3.0, 2.0, 0.0)]);
        assert_eq!(crop_roi(&inside, 20.0), inside);
    }

    #[test]
    fn tiny_cube_collapses_to_centroid() {
        let mut pts = Vec::new();
        for i in 0..8 {
            let b = |k: usize| if i & (1 << k) != 0 { 0.01 } else { 0.0 };
            pts.push(Vec3::new(0.2 + b(0), 0.3 + b(1), 0.4 + b(2)));
        }
        let out = voxel_downsample(&cloud(pts), 1.0);
        assert_eq!(out.len(), 1);
        assert!((out.points[0] - Vec3::new(0.205, 0.305, 0.405)).norm() < 1e-12);
    }

    #[test]
    fn distinct_voxels_unchanged() {
        let pts = vec![
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(1.5, 0.5, 0.5),
            Vec3::new(-0.5, 3.5, 0.5),
        ];
        let out = voxel_downsample(&cloud(pts.clone()), 1.0);
        assert_eq!(out.points, pts);
        assert!(voxel_downsample(&cloud(vec![]), 1.0).is_empty());
    }
}
