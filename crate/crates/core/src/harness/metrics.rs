//! Offline metrics over a trace: perception accuracy, latency, following gap.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::trace::{PlanRow, TimingRow, Trace, WorldRow};
use super::{HarnessError, Mode};
use crate::geometry::{wrap_angle, OrientedBox};
use crate::planner::SpeedCase;
use crate::tracking::{TrackRecord, TrackStatus};
use crate::world::EGO_ID;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            mean,
            std: var.sqrt(),
            count: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionMetrics {
    pub range: f64,
    pub dynamic_only: bool,
    pub frames: usize,
    pub ground_truth: usize,
    pub matched: usize,
    pub recall: f64,
    pub miou: f64,
    /// Degrees, modulo a half turn.
    pub orientation_error: MeanStd,
    /// m/s
    pub speed_error: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowingStats {
    pub samples: usize,
    /// Distance to the followed vehicle as the planner perceived it.
    pub gap: MeanStd,
    pub min_gap: f64,
    /// Smallest ground-truth gap over the same ticks.
    pub min_gt_gap: Option<f64>,
    pub d_safe: MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageLatency {
    /// Seconds.
    pub avg: f64,
    pub max: f64,
}

impl StageLatency {
    fn of(us: impl Iterator<Item = f64>) -> Self {
        let (mut sum, mut max, mut n) = (0.0, 0.0f64, 0usize);
        for v in us {
            sum += v;
            max = max.max(v);
            n += 1;
        }
        if n == 0 {
            return Self::default();
        }
        Self {
            avg: sum / n as f64 * 1e-6,
            max: max * 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub ticks: usize,
    pub stages: BTreeMap<String, StageLatency>,
    pub lidar_perception: StageLatency,
    pub path_generation: StageLatency,
    pub speed_planning: StageLatency,
    pub local_planner_total: StageLatency,
    /// Average local planner total within the 50 ms tick.
    pub realtime: bool,
    /// Average lidar perception within the 50 ms tick.
    pub perception_realtime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub ticks: u64,
    pub collision_count: u64,
    pub perception: Option<PerceptionMetrics>,
    pub following: Option<FollowingStats>,
    /// Perceived distance to the followed vehicle per tick, `null` when not
    /// following.
    pub following_distance_series: Vec<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_stage_latency: Option<LatencyReport>,
}

/// Signed yaw difference folded into `[0, pi/2]`.
pub fn yaw_error_mod_half_turn(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b).abs();
    d.min(PI - d)
}

/// Ground-truth vehicles seen from the ego at each tick, keyed by tick.
fn ground_truth_by_tick(world: &[WorldRow]) -> BTreeMap<u64, (WorldRow, Vec<WorldRow>)> {
    let mut out: BTreeMap<u64, (Option<WorldRow>, Vec<WorldRow>)> = BTreeMap::new();
    for r in world {
        let e = out.entry(r.tick).or_default();
        if r.id == EGO_ID {
            e.0 = Some(*r);
        } else {
            e.1.push(*r);
        }
    }
    out.into_iter()
        .filter_map(|(t, (ego, others))| ego.map(|e| (t, (e, others))))
        .collect()
}

/// Compare confirmed tracks against ground truth within `range` of the ego.
pub fn eval_perception(
    world: &[WorldRow],
    tracks: &[TrackRecord],
    range: f64,
    dynamic_only: bool,
    static_speed: f64,
) -> Result<PerceptionMetrics, HarnessError> {
    if world.is_empty() {
        return Err(HarnessError::EmptyTrace);
    }
    let gt = ground_truth_by_tick(world);
    let mut by_frame: BTreeMap<u64, Vec<&TrackRecord>> = BTreeMap::new();
    for t in tracks.iter().filter(|t| t.status == TrackStatus::Confirmed) {
        by_frame.entry(t.frame_id).or_default().push(t);
    }
    let (mut total, mut matched) = (0usize, 0usize);
    let mut ious = Vec::new();
    let mut yaw_err = Vec::new();
    let mut speed_err = Vec::new();
    let empty = Vec::new();
    for (tick, (ego, others)) in &gt {
        let frame = ego.pose();
        let truth: Vec<(OrientedBox, f64)> = others
            .iter()
            .filter(|r| !dynamic_only || r.speed > static_speed)
            .map(|r| (r.bev_box().transformed(&frame), r.speed))
            .filter(|(b, _)| b.center.norm() <= range)
            .collect();
        total += truth.len();
        let dets = by_frame.get(tick).unwrap_or(&empty);
        let mut pairs = Vec::new();
        for (gi, (g, _)) in truth.iter().enumerate() {
            for (di, d) in dets.iter().enumerate() {
                let iou = g.iou(&d.bev_box());
                if iou > 0.0 {
                    pairs.push((iou, gi, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut g_used = vec![false; truth.len()];
        let mut d_used = vec![false; dets.len()];
        for (iou, gi, di) in pairs {
            if g_used[gi] || d_used[di] {
                continue;
            }
            g_used[gi] = true;
            d_used[di] = true;
            matched += 1;
            ious.push(iou);
            let (g, speed) = truth[gi];
            yaw_err.push(yaw_error_mod_half_turn(dets[di].yaw, g.yaw).to_degrees());
            speed_err.push((dets[di].v - speed).abs());
        }
    }
    Ok(PerceptionMetrics {
        range,
        dynamic_only,
        frames: gt.len(),
        ground_truth: total,
        matched,
        recall: if total == 0 { 0.0 } else { matched as f64 / total as f64 },
        miou: MeanStd::of(&ious).mean,
        orientation_error: MeanStd::of(&yaw_err),
        speed_error: MeanStd::of(&speed_err),
    })
}

/// Perception metrics of a recorded trace.
pub fn eval_trace(trace: &Trace, range: f64, dynamic_only: bool) -> Result<PerceptionMetrics, HarnessError> {
    if trace.meta.mode != Mode::Lidar {
        return Err(HarnessError::Trace("perception metrics need a lidar-mode trace".into()));
    }
    eval_perception(
        &trace.world,
        &trace.tracks,
        range,
        dynamic_only,
        trace.meta.static_speed,
    )
}

pub fn bench_latency(timing: &[TimingRow]) -> LatencyReport {
    let col = |f: fn(&TimingRow) -> f64| StageLatency::of(timing.iter().map(f));
    let mut stages = BTreeMap::new();
    for (name, f) in [
        ("crop", (|r: &TimingRow| r.crop_us) as fn(&TimingRow) -> f64),
        ("voxel", |r| r.voxel_us),
        ("ground", |r| r.ground_us),
        ("cluster", |r| r.cluster_us),
        ("fit", |r| r.fit_us),
        ("tracking", |r| r.tracking_us),
    ] {
        stages.insert(name.to_string(), col(f));
    }
    let lidar_perception = col(|r| r.perception_us);
    let local_planner_total = col(|r| r.planner_total_us);
    LatencyReport {
        ticks: timing.len(),
        stages,
        lidar_perception,
        path_generation: col(|r| r.path_us),
        speed_planning: col(|r| r.speed_us),
        local_planner_total,
        realtime: local_planner_total.avg <= 0.05,
        perception_realtime: lidar_perception.avg <= 0.05,
    }
}

/// Perceived distance to the lead on ticks where the planner is following.
pub fn following_series(trace: &Trace) -> Vec<Option<f64>> {
    trace
        .plans
        .iter()
        .map(|p| {
            if p.case == SpeedCase::Platoon {
                p.blocking_distance
            } else {
                None
            }
        })
        .collect()
}

pub fn following_stats(trace: &Trace) -> Option<FollowingStats> {
    let rows: Vec<&PlanRow> = trace
        .plans
        .iter()
        .filter(|p| p.case == SpeedCase::Platoon && p.blocking_distance.is_some())
        .collect();
    if rows.is_empty() {
        return None;
    }
    let gaps: Vec<f64> = rows.iter().filter_map(|p| p.blocking_distance).collect();
    let d_safe: Vec<f64> = rows.iter().map(|p| p.d_safe).collect();
    let min_gt_gap = rows.iter().filter_map(|p| p.gt_gap).reduce(f64::min);
    Some(FollowingStats {
        samples: gaps.len(),
        gap: MeanStd::of(&gaps),
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        min_gt_gap,
        d_safe: MeanStd::of(&d_safe),
    })
}

/// Report written next to a trace. Latency is left out so the file is a pure
/// function of the deterministic records.
pub fn build_report(trace: &Trace) -> Result<MetricsReport, HarnessError> {
    if trace.world.is_empty() {
        return Err(HarnessError::EmptyTrace);
    }
    let perception = match trace.meta.mode {
        Mode::Lidar => Some(eval_trace(trace, trace.meta.roi_radius, false)?),
        Mode::Gt => None,
    };
    Ok(MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        scenario: trace.meta.scenario.clone(),
        mode: trace.meta.mode,
        seed: trace.meta.seed,
        ticks: trace.meta.ticks,
        collision_count: trace.plans.last().map_or(0, |p| p.collisions),
        perception,
        following: following_stats(trace),
        following_distance_series: following_series(trace),
        per_stage_latency: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(tick: u64, id: u32, x: f64, y: f64, yaw: f64, speed: f64) -> WorldRow {
        WorldRow {
            tick,
            time: tick as f64 * 0.05,
            id,
            x,
            y,
            yaw,
            speed,
            length: 4.0,
            width: 2.0,
            height: 1.5,
        }
    }

    fn track(frame: u64, x: f64, y: f64, yaw: f64, v: f64) -> TrackRecord {
        TrackRecord {
            frame_id: frame,
            time: 0.0,
            id: 1,
            status: TrackStatus::Confirmed,
            x,
            y,
            yaw,
            v,
            yaw_rate: 0.0,
            cov_diag: [0.0; 5],
            length: 4.0,
            width: 2.0,
            is_static: false,
        }
    }

    #[test]
    fn perfect_match() {
        let world = vec![row(0, 0, 0.0, 0.0, 0.0, 5.0), row(0, 1, 10.0, 0.0, 0.0, 5.0)];
        let m = eval_perception(&world, &[track(0, 10.0, 0.0, 0.0, 5.0)], 20.0, false, 0.5).unwrap();
        assert_eq!(m.recall, 1.0);
        assert!((m.miou - 1.0).abs() < 1e-12);
        assert_eq!(m.orientation_error.mean, 0.0);
        assert_eq!(m.speed_error.mean, 0.0);
    }

    #[test]
    fn lateral_shift_iou() {
        let world = vec![row(0, 0, 0.0, 0.0, 0.0, 5.0), row(0, 1, 10.0, 0.0, 0.0, 5.0)];
        let m = eval_perception(&world, &[track(0, 10.0, 1.0, 0.0, 5.0)], 20.0, false, 0.5).unwrap();
        assert!((m.miou - 4.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn no_detections_and_empty() {
        let world = vec![row(0, 0, 0.0, 0.0, 0.0, 5.0), row(0, 1, 10.0, 0.0, 0.0, 5.0)];
        let m = eval_perception(&world, &[], 20.0, false, 0.5).unwrap();
        assert_eq!(m.recall, 0.0);
        assert!(matches!(
            eval_perception(&[], &[], 20.0, false, 0.5),
            Err(HarnessError::EmptyTrace)
        ));
    }

    #[test]
    fn latency_statistics() {
        let rows: Vec<TimingRow> = (0..4)
            .map(|i| TimingRow {
                tick: i,
                planner_total_us: 10_000.0,
                perception_us: if i == 3 { 40_000.0 } else { 10_000.0 },
                ..Default::default()
            })
            .collect();
        let r = bench_latency(&rows);
        assert!((r.local_planner_total.avg - 0.01).abs() < 1e-12);
        assert_eq!(r.local_planner_total.avg, r.local_planner_total.max);
        assert!(r.lidar_perception.avg < r.lidar_perception.max);
        assert!(r.realtime);
    }
}
