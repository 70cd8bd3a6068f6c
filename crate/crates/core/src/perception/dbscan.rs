use std::collections::HashMap;

use crate::geometry::Vec3;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Clustering {
    /// Point indices per cluster, ascending within each cluster. Clusters are
    /// ordered by the index of the core point that founded them.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

struct Grid {
    inv: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vec3], cell: f64) -> Self {
        let inv = 1.0 / cell;
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(inv, p)).or_default().push(i);
        }
        Self { inv, cells }
    }

    fn key(inv: f64, p: &Vec3) -> (i64, i64, i64) {
        (
            (p.x * inv).floor() as i64,
            (p.y * inv).floor() as i64,
            (p.z * inv).floor() as i64,
        )
    }

    fn region(&self, points: &[Vec3], i: usize, eps2: f64, out: &mut Vec<usize>) {
        out.clear();
        let p = &points[i];
        let (kx, ky, kz) = Self::key(self.inv, p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(cell) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(cell.iter().copied().filter(|&j| (points[j] - p).norm_squared() <= eps2));
                    }
                }
            }
        }
    }
}

/// Density-based clustering with 3D Euclidean distance. A point is core when
/// at least `min_points` points (itself included) lie within `epsilon`.
/// A border point reachable from several clusters joins the first one found.
pub fn dbscan_cluster(points: &[Vec3], epsilon: f64, min_points: usize) -> Clustering {
    assert!(epsilon > 0.0 && min_points > 0, "dbscan parameters must be positive");
    const UNSEEN: usize = usize::MAX;
    const NOISE: usize = usize::MAX - 1;
    let n = points.len();
    let grid = Grid::new(points, epsilon);
    let eps2 = epsilon * epsilon;
    let mut label = vec![UNSEEN; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut nbrs = Vec::new();
    let mut queue = Vec::new();
    for i in 0..n {
        if label[i] != UNSEEN {
            continue;
        }
        grid.region(points, i, eps2, &mut nbrs);
        if nbrs.len() < min_points {
            label[i] = NOISE;
            continue;
        }
        let c = clusters.len();
        let mut members = vec![i];
        label[i] = c;
        queue.clear();
        queue.extend(nbrs.iter().copied().filter(|&j| j != i));
        while let Some(j) = queue.pop() {
            match label[j] {
                NOISE => {
                    label[j] = c;
                    members.push(j);
                }
                UNSEEN => {
                    label[j] = c;
                    members.push(j);
                    grid.region(points, j, eps2, &mut nbrs);
                    if nbrs.len() >= min_points {
                        queue.extend(
                            nbrs.iter()
                                .copied()
                                .filter(|&k| label[k] == UNSEEN || label[k] == NOISE),
                        );
                    }
                }
                _ => {}
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    let noise = (0..n).filter(|&i| label[i] == NOISE).collect();
    Clustering { clusters, noise }
}
