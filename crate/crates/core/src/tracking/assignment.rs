//! Minimum-cost one-to-one assignment (Hungarian method) and gated
//! nearest-neighbour association.

use crate::geometry::Vec2;

/// Optimal assignment for a rectangular cost matrix given as rows.
///
/// Returns, for every row, the assigned column (or `None` when there are more
/// rows than columns). Every row or every column is assigned, whichever is
/// fewer, and the total cost of the assigned pairs is minimal.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n_rows = cost.len();
    if n_rows == 0 {
        return Vec::new();
    }
    let n_cols = cost[0].len();
    if n_cols == 0 {
        return vec![None; n_rows];
    }
    if n_rows > n_cols {
        let t: Vec<Vec<f64>> = (0..n_cols).map(|j| (0..n_rows).map(|i| cost[i][j]).collect()).collect();
        let col_to_row = hungarian(&t);
        let mut out = vec![None; n_rows];
        for (j, r) in col_to_row.into_iter().enumerate() {
            if let Some(i) = r {
                out[i] = Some(j);
            }
        }
        return out;
    }
    // Potentials-based O(n^2 m) algorithm, 1-indexed internally.
    let (n, m) = (n_rows, n_cols);
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Association {
    /// `(track index, detection index)`
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Gated optimal association on Euclidean distance.
pub fn gnn_associate(tracks: &[Vec2], detections: &[Vec2], gate: f64) -> Association {
    let forbidden = 1e6 + 1e3 * gate;
    let cost: Vec<Vec<f64>> = tracks
        .iter()
        .map(|t| {
            detections
                .iter()
                .map(|d| {
                    let c = (t - d).norm();
                    if c > gate {
                        forbidden
                    } else {
                        c
                    }
                })
                .collect()
        })
        .collect();
    let assigned = hungarian(&cost);
    let mut out = Association::default();
    let mut det_used = vec![false; detections.len()];
    for (i, a) in assigned.iter().enumerate() {
        match a {
            Some(j) if cost[i][*j] <= gate => {
                out.matches.push((i, *j));
                det_used[*j] = true;
            }
            _ => out.unmatched_tracks.push(i),
        }
    }
    out.unmatched_detections = (0..detections.len()).filter(|&j| !det_used[j]).collect();
    if tracks.is_empty() {
        out.unmatched_detections = (0..detections.len()).collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_match() {
        let a = gnn_associate(&[Vec2::new(10.0, 0.0)], &[Vec2::new(10.2, 0.0)], 2.0);
        assert_eq!(a.matches, vec![(0, 0)]);
    }

    #[test]
    fn cross_assignment() {
        let a = gnn_associate(
            &[Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0)],
            &[Vec2::new(9.8, 0.0), Vec2::new(0.3, 0.0)],
            2.0,
        );
        assert_eq!(a.matches, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn gated_out() {
        let a = gnn_associate(&[Vec2::new(0.0, 0.0)], &[Vec2::new(5.0, 0.0)], 2.0);
        assert!(a.matches.is_empty());
        assert_eq!(a.unmatched_tracks, vec![0]);
        assert_eq!(a.unmatched_detections, vec![0]);
    }

    #[test]
    fn rectangular_shapes() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0]];
        assert_eq!(hungarian(&cost), vec![Some(1), Some(0)]);
        let t = vec![vec![4.0, 2.5], vec![1.0, 0.0], vec![3.0, 5.0]];
        assert_eq!(hungarian(&t), vec![None, Some(1), Some(0)]);
        assert!(hungarian(&[]).is_empty());
    }
}
