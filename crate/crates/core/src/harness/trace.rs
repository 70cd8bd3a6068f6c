//! Trace directory records and their on-disk formats.
//!
//! | file | format |
//! |------|--------|
//! | `scenario.copy` | effective scenario TOML |
//! | `run.json` | [`RunMeta`] |
//! | `world.csv` | [`WorldRow`] per vehicle per tick, ego is id 0 |
//! | `world.bin` | same rows, little-endian binary |
//! | `detections.jsonl` | [`DetectionFrame`] per perception frame |
//! | `tracks.jsonl` | [`TrackRecord`] per track per frame |
//! | `plans.csv` | [`PlanRow`] per tick |
//! | `timing.csv` | [`TimingRow`] per tick, wall-clock microseconds |
//! | `report.json` | [`super::metrics::MetricsReport`] |
//! | `clouds/` | optional per-frame point clouds |

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Mode};
use crate::geometry::{OrientedBox, Pose2, Vec2};
use crate::perception::{DetectedVehicle, StageCounts};
use crate::planner::SpeedCase;
use crate::tracking::TrackRecord;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub ticks: u64,
    pub dt: f64,
    pub roi_radius: f64,
    pub static_speed: f64,
    pub lidar_config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldRow {
    pub tick: u64,
    pub time: f64,
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl WorldRow {
    pub const HEADER: &'static str = "tick,time,id,x,y,yaw,speed,length,width,height";

    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.yaw)
    }

    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(Vec2::new(self.x, self.y), self.yaw, self.length, self.width)
    }

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.tick, self.time, self.id, self.x, self.y, self.yaw, self.speed, self.length, self.width, self.height
        )
    }

    fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return None;
        }
        Some(Self {
            tick: f[0].parse().ok()?,
            time: f[1].parse().ok()?,
            id: f[2].parse().ok()?,
            x: f[3].parse().ok()?,
            y: f[4].parse().ok()?,
            yaw: f[5].parse().ok()?,
            speed: f[6].parse().ok()?,
            length: f[7].parse().ok()?,
            width: f[8].parse().ok()?,
            height: f[9].parse().ok()?,
        })
    }

    fn to_bin(&self, out: &mut Vec<u8>) {
        out.extend(self.tick.to_le_bytes());
        out.extend(self.id.to_le_bytes());
        for v in [
            self.time,
            self.x,
            self.y,
            self.yaw,
            self.speed,
            self.length,
            self.width,
            self.height,
        ] {
            out.extend(v.to_le_bytes());
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub frame_id: u64,
    pub time: f64,
    pub skipped: bool,
    pub counts: StageCounts,
    pub detections: Vec<DetectedVehicle>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanRow {
    pub tick: u64,
    pub time: f64,
    pub case: SpeedCase,
    pub ego_speed: f64,
    pub v_pre: f64,
    pub v_exc: f64,
    pub v_reach: f64,
    pub d_safe: f64,
    pub blocking_distance: Option<f64>,
    pub blocking_speed: Option<f64>,
    pub blocking_yaw: Option<f64>,
    pub path_points: usize,
    pub free_points: usize,
    /// Ground-truth gap to the nearest vehicle on the route ahead, minus the
    /// standstill offset.
    pub gt_gap: Option<f64>,
    pub collisions: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Option<Option<f64>> {
    if s.is_empty() {
        Some(None)
    } else {
        s.parse().ok().map(Some)
    }
}

fn case_name(c: SpeedCase) -> &'static str {
    match c {
        SpeedCase::Normal => "normal",
        SpeedCase::Obstacle => "obstacle",
        SpeedCase::Platoon => "platoon",
    }
}

impl PlanRow {
    pub const HEADER: &'static str = "tick,time,case,ego_speed,v_pre,v_exc,v_reach,d_safe,blocking_distance,blocking_speed,blocking_yaw,path_points,free_points,gt_gap,collisions";

    fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.tick,
            self.time,
            case_name(self.case),
            self.ego_speed,
            self.v_pre,
            self.v_exc,
            self.v_reach,
            self.d_safe,
            opt(self.blocking_distance),
            opt(self.blocking_speed),
            opt(self.blocking_yaw),
            self.path_points,
            self.free_points,
            opt(self.gt_gap),
            self.collisions
        )
    }

    fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return None;
        }
        let case = match f[2] {
            "normal" => SpeedCase::Normal,
            "obstacle" => SpeedCase::Obstacle,
            "platoon" => SpeedCase::Platoon,
            _ => return None,
        };
        Some(Self {
            tick: f[0].parse().ok()?,
            time: f[1].parse().ok()?,
            case,
            ego_speed: f[3].parse().ok()?,
            v_pre: f[4].parse().ok()?,
            v_exc: f[5].parse().ok()?,
            v_reach: f[6].parse().ok()?,
            d_safe: f[7].parse().ok()?,
            blocking_distance: parse_opt(f[8])?,
            blocking_speed: parse_opt(f[9])?,
            blocking_yaw: parse_opt(f[10])?,
            path_points: f[11].parse().ok()?,
            free_points: f[12].parse().ok()?,
            gt_gap: parse_opt(f[13])?,
            collisions: f[14].parse().ok()?,
        })
    }
}

/// Wall-clock microseconds per stage for one tick. Perception and tracking
/// fields are zero in ground-truth mode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingRow {
    pub tick: u64,
    pub crop_us: f64,
    pub voxel_us: f64,
    pub ground_us: f64,
    pub cluster_us: f64,
    pub fit_us: f64,
    pub tracking_us: f64,
    /// Detection and tracking together.
    pub perception_us: f64,
    pub path_us: f64,
    pub speed_us: f64,
    /// Perception, path generation and speed planning, timed as one block.
    pub planner_total_us: f64,
}

impl TimingRow {
    pub const HEADER: &'static str =
        "tick,crop_us,voxel_us,ground_us,cluster_us,fit_us,tracking_us,perception_us,path_us,speed_us,planner_total_us";

    fn to_csv(&self) -> String {
        format!(
            "{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            self.tick,
            self.crop_us,
            self.voxel_us,
            self.ground_us,
            self.cluster_us,
            self.fit_us,
            self.tracking_us,
            self.perception_us,
            self.path_us,
            self.speed_us,
            self.planner_total_us
        )
    }

    fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<f64> = line.split(',').map(|s| s.parse().ok()).collect::<Option<_>>()?;
        if f.len() != 11 {
            return None;
        }
        Some(Self {
            tick: f[0] as u64,
            crop_us: f[1],
            voxel_us: f[2],
            ground_us: f[3],
            cluster_us: f[4],
            fit_us: f[5],
            tracking_us: f[6],
            perception_us: f[7],
            path_us: f[8],
            speed_us: f[9],
            planner_total_us: f[10],
        })
    }
}

/// Everything a run records.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: RunMeta,
    pub scenario_text: String,
    pub world: Vec<WorldRow>,
    pub detections: Vec<DetectionFrame>,
    pub tracks: Vec<TrackRecord>,
    pub plans: Vec<PlanRow>,
    pub timing: Vec<TimingRow>,
}

fn write_lines<I: IntoIterator<Item = String>>(
    path: &Path,
    header: Option<&str>,
    lines: I,
) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(h) = header {
        writeln!(w, "{h}")?;
    }
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T>(path: &Path, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, HarnessError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.is_empty() {
            continue;
        }
        out.push(
            parse(&line).ok_or_else(|| HarnessError::Trace(format!("{}:{}: malformed row", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Trace(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("record serializes")
}

impl Trace {
    /// Write every file except `report.json` and `clouds/`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("scenario.copy"), &self.scenario_text)?;
        fs::write(
            dir.join("run.json"),
            serde_json::to_string_pretty(&self.meta).expect("meta serializes") + "\n",
        )?;
        write_lines(
            &dir.join("world.csv"),
            Some(WorldRow::HEADER),
            self.world.iter().map(WorldRow::to_csv),
        )?;
        let mut bin = Vec::with_capacity(self.world.len() * 76 + 8);
        bin.extend(b"WRLD");
        bin.extend(TRACE_SCHEMA_VERSION.to_le_bytes());
        for r in &self.world {
            r.to_bin(&mut bin);
        }
        fs::write(dir.join("world.bin"), bin)?;
        write_lines(&dir.join("detections.jsonl"), None, self.detections.iter().map(to_json))?;
        write_lines(&dir.join("tracks.jsonl"), None, self.tracks.iter().map(to_json))?;
        write_lines(
            &dir.join("plans.csv"),
            Some(PlanRow::HEADER),
            self.plans.iter().map(PlanRow::to_csv),
        )?;
        write_lines(
            &dir.join("timing.csv"),
            Some(TimingRow::HEADER),
            self.timing.iter().map(TimingRow::to_csv),
        )?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, HarnessError> {
        if !dir.is_dir() {
            return Err(HarnessError::Trace(format!(
                "{} is not a trace directory",
                dir.display()
            )));
        }
        let meta: RunMeta = serde_json::from_str(&fs::read_to_string(dir.join("run.json"))?)
            .map_err(|e| HarnessError::Trace(format!("run.json: {e}")))?;
        let timing_path = dir.join("timing.csv");
        Ok(Self {
            meta,
            scenario_text: fs::read_to_string(dir.join("scenario.copy"))?,
            world: read_csv(&dir.join("world.csv"), WorldRow::from_csv)?,
            detections: read_jsonl(&dir.join("detections.jsonl"))?,
            tracks: read_jsonl(&dir.join("tracks.jsonl"))?,
            plans: read_csv(&dir.join("plans.csv"), PlanRow::from_csv)?,
            timing: if timing_path.exists() {
                read_csv(&timing_path, TimingRow::from_csv)?
            } else {
                Vec::new()
            },
        })
    }

    /// Only the timing rows, for benchmarking.
    pub fn read_timing(dir: &Path) -> Result<Vec<TimingRow>, HarnessError> {
        read_csv(&dir.join("timing.csv"), TimingRow::from_csv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows_round_trip() {
        let w = WorldRow {
            tick: 3,
            time: 0.15000000000000002,
            id: 2,
            x: -1.25,
            y: 1e-7,
            yaw: 0.3,
            speed: 5.0,
            length: 4.5,
            width: 1.9,
            height: 1.5,
        };
        assert_eq!(WorldRow::from_csv(&w.to_csv()), Some(w));
        let p = PlanRow {
            tick: 1,
            time: 0.05,
            case: SpeedCase::Platoon,
            ego_speed: 5.0,
            v_pre: 5.1,
            v_exc: 5.1,
            v_reach: 6.0,
            d_safe: 5.7,
            blocking_distance: Some(6.0),
            blocking_speed: Some(5.0),
            blocking_yaw: None,
            path_points: 60,
            free_points: 20,
            gt_gap: None,
            collisions: 0,
        };
        assert_eq!(PlanRow::from_csv(&p.to_csv()), Some(p));
    }
}
