//! Synthetic spinning LiDAR.
//!
//! Rays are cast from the sensor origin on the ego roof against every solid
//! box in the world and the ground plane. The nearest hit within range becomes
//! a point; range noise is additive Gaussian along the ray and points can be
//! dropped at random. Output points are in the sensor frame: x forward, y left,
//! z up, origin at the sensor.

use std::f64::consts::PI;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose2, Vec3};
use crate::world::{SolidBox, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub channels: usize,
    /// `(min, max)` elevation in degrees.
    pub vertical_fov: [f64; 2],
    /// Azimuth step in degrees.
    pub horizontal_resolution: f64,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub mount_height: f64,
    pub dropout_prob: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            vertical_fov: [-24.8, 2.0],
            horizontal_resolution: 0.4,
            max_range: 50.0,
            range_noise_sigma: 0.02,
            mount_height: 2.0,
            dropout_prob: 0.0,
        }
    }
}

impl LidarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.channels == 0 {
            return Err("channels must be >= 1".into());
        }
        if !(self.max_range > 0.0) {
            return Err("max_range must be > 0".into());
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err("range_noise_sigma must be >= 0".into());
        }
        if !(self.horizontal_resolution > 0.0 && self.horizontal_resolution <= 360.0) {
            return Err("horizontal_resolution must be in (0, 360]".into());
        }
        if !(self.vertical_fov[0] <= self.vertical_fov[1]) {
            return Err("vertical_fov min must not exceed max".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err("dropout_prob must be in [0, 1]".into());
        }
        if !(self.mount_height > 0.0) {
            return Err("mount_height must be > 0".into());
        }
        Ok(())
    }

    pub fn elevations(&self) -> Vec<f64> {
        let [lo, hi] = self.vertical_fov;
        if self.channels == 1 {
            return vec![lo.to_radians()];
        }
        let step = (hi - lo) / (self.channels - 1) as f64;
        (0..self.channels)
            .map(|i| (lo + step * i as f64).to_radians())
            .collect()
    }

    pub fn azimuth_count(&self) -> usize {
        ((360.0 / self.horizontal_resolution) + 1e-9).floor().max(1.0) as usize
    }

    /// FNV-1a hash of the serialized config, used in fixture sidecars.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// One LiDAR frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub timestamp: f64,
    pub frame_id: u64,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, timestamp: f64, frame_id: u64) -> Self {
        Self {
            points,
            timestamp,
            frame_id,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Intensity is not simulated.
    pub fn intensity(&self, _index: usize) -> f32 {
        1.0
    }

    /// Same metadata, different points.
    pub fn with_points(&self, points: Vec<Vec3>) -> Self {
        Self {
            points,
            timestamp: self.timestamp,
            frame_id: self.frame_id,
        }
    }
}

/// Box in the sensor's yaw-aligned frame plus its azimuth span.
struct Candidate {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    half_l: f64,
    half_w: f64,
    z_min: f64,
    z_max: f64,
    az_center: f64,
    az_lo: f64,
    az_hi: f64,
    encloses_sensor: bool,
}

impl Candidate {
    fn new(b: &SolidBox, sensor: &Pose2, sensor_z: f64, max_range: f64) -> Option<Self> {
        let c = sensor.to_local(b.footprint.center);
        let yaw = b.footprint.yaw - sensor.yaw;
        let half_l = b.footprint.length / 2.0;
        let half_w = b.footprint.width / 2.0;
        let radius = half_l.hypot(half_w);
        if c.norm() - radius > max_range {
            return None;
        }
        let (sin, cos) = yaw.sin_cos();
        let az_center = c.y.atan2(c.x);
        let encloses_sensor = c.norm() <= radius;
        let mut lo = 0.0f64;
        let mut hi = 0.0f64;
        for (sx, sy) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            let px = c.x + cos * sx * half_l - sin * sy * half_w;
            let py = c.y + sin * sx * half_l + cos * sy * half_w;
            let d = wrap_angle(py.atan2(px) - az_center);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Some(Self {
            cx: c.x,
            cy: c.y,
            cos,
            sin,
            half_l,
            half_w,
            z_min: b.z_min - sensor_z,
            z_max: b.z_max - sensor_z,
            az_center,
            az_lo: lo - 1e-9,
            az_hi: hi + 1e-9,
            encloses_sensor,
        })
    }

    fn covers(&self, az: f64) -> bool {
        if self.encloses_sensor {
            return true;
        }
        let d = wrap_angle(az - self.az_center);
        d >= self.az_lo && d <= self.az_hi
    }

    /// Slab test; returns the entry distance along the unit ray.
    fn hit(&self, dir: &Vec3) -> Option<f64> {
        // Ray origin is the sensor (0, 0, 0); move into box-local coordinates.
        let ox = -self.cx;
        let oy = -self.cy;
        let lox = self.cos * ox + self.sin * oy;
        let loy = -self.sin * ox + self.cos * oy;
        let ldx = self.cos * dir.x + self.sin * dir.y;
        let ldy = -self.sin * dir.x + self.cos * dir.y;
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for (o, d, lo, hi) in [
            (lox, ldx, -self.half_l, self.half_l),
            (loy, ldy, -self.half_w, self.half_w),
            (0.0, dir.z, self.z_min, self.z_max),
        ] {
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let a = (lo - o) / d;
                let b = (hi - o) / d;
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                t0 = t0.max(a);
                t1 = t1.min(b);
                if t0 > t1 {
                    return None;
                }
            }
        }
        (t0 > 0.0).then_some(t0)
    }
}

/// Cast one full revolution from the pose of vehicle `ego_id`.
pub fn scan<R: Rng + ?Sized>(world: &World, ego_id: u32, config: &LidarConfig, rng: &mut R) -> PointCloud {
    let Some(ego) = world.vehicle(ego_id) else {
        return PointCloud::new(Vec::new(), world.time, world.tick);
    };
    let sensor = ego.pose();
    let sensor_z = world.ground_height(sensor.position()) + config.mount_height;
    let boxes = world.solid_boxes(ego_id);
    let candidates: Vec<Candidate> = boxes
        .iter()
        .filter_map(|b| Candidate::new(b, &sensor, sensor_z, config.max_range))
        .collect();

    // Ground plane z = gx*x + gy*y expressed around the sensor, in sensor axes.
    let slope = world.config().ground.slope;
    let (s, c) = sensor.yaw.sin_cos();
    let gx = slope[0] * c + slope[1] * s;
    let gy = -slope[0] * s + slope[1] * c;
    let ground_offset = world.ground_height(sensor.position()) - sensor_z;

    let elevations: Vec<(f64, f64)> = config.elevations().iter().map(|e| e.sin_cos()).collect();
    let n_az = config.azimuth_count();
    let az_step = 2.0 * PI / n_az as f64;
    let noise = Normal::new(0.0, config.range_noise_sigma.max(0.0)).expect("finite sigma");
    let sigma = config.range_noise_sigma;
    let mut points = Vec::with_capacity(n_az * config.channels);
    let mut active: Vec<&Candidate> = Vec::with_capacity(candidates.len());

    for j in 0..n_az {
        let az = wrap_angle(j as f64 * az_step);
        let (saz, caz) = az.sin_cos();
        active.clear();
        active.extend(candidates.iter().filter(|cand| cand.covers(az)));
        for &(se, ce) in &elevations {
            let dir = Vec3::new(ce * caz, ce * saz, se);
            let mut best = f64::INFINITY;
            let denom = dir.z - gx * dir.x - gy * dir.y;
            if denom < -1e-12 {
                let t = ground_offset / denom;
                if t > 0.0 {
                    best = t;
                }
            }
            for cand in &active {
                if let Some(t) = cand.hit(&dir) {
                    if t < best {
                        best = t;
                    }
                }
            }
            if best > config.max_range {
                continue;
            }
            if config.dropout_prob > 0.0 && rng.random::<f64>() < config.dropout_prob {
                continue;
            }
            let range = if sigma > 0.0 {
                let e: f64 = noise.sample(rng);
                (best + e.clamp(-6.0 * sigma, 6.0 * sigma)).max(0.0)
            } else {
                best
            };
            points.push(dir * range);
        }
    }
    PointCloud::new(points, world.time, world.tick)
}

/// Sidecar metadata for a dumped frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSidecar {
    pub frame_id: u64,
    pub timestamp: f64,
    pub pose: Pose2,
    pub config_hash: String,
    pub num_points: usize,
}

/// Little-endian `f32` x, y, z records.
pub fn write_cloud_bin<W: Write>(cloud: &PointCloud, mut w: W) -> io::Result<()> {
    let mut buf = Vec::with_capacity(cloud.len() * 12);
    for p in &cloud.points {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)
}

pub fn read_cloud_bin<R: Read>(mut r: R) -> io::Result<Vec<Vec3>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() % 12 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "point record stream is not a multiple of 12 bytes",
        ));
    }
    Ok(buf
        .chunks_exact(12)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes([c[i], c[i + 1], c[i + 2], c[i + 3]]) as f64;
            Vec3::new(f(0), f(4), f(8))
        })
        .collect())
}

/// Write `<stem>.bin` and `<stem>.json` into `dir`.
pub fn write_fixture(dir: &Path, stem: &str, cloud: &PointCloud, pose: Pose2, config: &LidarConfig) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let f = std::fs::File::create(dir.join(format!("{stem}.bin")))?;
    write_cloud_bin(cloud, io::BufWriter::new(f))?;
    let sidecar = CloudSidecar {
        frame_id: cloud.frame_id,
        timestamp: cloud.timestamp,
        pose,
        config_hash: config.config_hash(),
        num_points: cloud.len(),
    };
    std::fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&sidecar).map_err(io::Error::other)?,
    )
}

pub fn read_fixture(dir: &Path, stem: &str) -> io::Result<(PointCloud, CloudSidecar)> {
    let sidecar: CloudSidecar =
        serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?).map_err(io::Error::other)?;
    let points = read_cloud_bin(std::fs::File::open(dir.join(format!("{stem}.bin")))?)?;
    Ok((PointCloud::new(points, sidecar.timestamp, sidecar.frame_id), sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::load_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world(extra: &str) -> World {
        let text = format!(
            r#"
schema_version = 1
seed = 3
duration = 10.0

[[lanes]]
id = "main"
points = [[0.0, 0.0], [200.0, 0.0]]

[ego]
route = ["main"]
{extra}
"#
        );
        World::new(load_scenario(&text).unwrap()).unwrap()
    }

    fn noiseless() -> LidarConfig {
        LidarConfig {
            range_noise_sigma: 0.0,
            dropout_prob: 0.0,
            ..LidarConfig::default()
        }
    }

    #[test]
    fn empty_world_hits_ground_only_below_horizon() {
        let w = world("");
        let cfg = noiseless();
        let cloud = scan(&w, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(cloud.len() > 20_000, "{} points", cloud.len());
        for p in &cloud.points {
            assert!((p.z + cfg.mount_height).abs() < 1e-9);
            // Closed-form ray-plane range.
            let elevation = (p.z / p.norm()).asin();
            let expected = cfg.mount_height / elevation.abs().sin();
            assert!((p.norm() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn box_ahead_is_seen_on_near_face() {
        let w = world("[[traffic]]\nlane = \"main\"\nstart_s = 10.0\nsize = [4.0, 2.0, 1.5]\n");
        let cloud = scan(&w, 0, &noiseless(), &mut ChaCha8Rng::seed_from_u64(1));
        let boresight: Vec<&Vec3> = cloud
            .points
            .iter()
            .filter(|p| p.y.abs() < 0.05 && p.z > -2.0 + 0.2 && p.z < -0.5 - 1e-6)
            .collect();
        assert!(!boresight.is_empty());
        for p in boresight {
            assert!((p.x - 8.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn same_seed_same_cloud() {
        let w = world("[[traffic]]\nlane = \"main\"\nstart_s = 12.0\n");
        let cfg = LidarConfig {
            dropout_prob: 0.05,
            ..LidarConfig::default()
        };
        let a = scan(&w, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        let b = scan(&w, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn coarser_resolution_never_adds_points() {
        let w = world("");
        let mut last = usize::MAX;
        for res in [0.2, 0.4, 0.8, 1.6] {
            let cfg = LidarConfig {
                horizontal_resolution: res,
                ..noiseless()
            };
            let n = scan(&w, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud = PointCloud::new(vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-0.5, 0.25, 0.0)], 1.5, 30);
        write_fixture(dir.path(), "f", &cloud, Pose2::default(), &LidarConfig::default()).unwrap();
        let (back, side) = read_fixture(dir.path(), "f").unwrap();
        assert_eq!(back, cloud);
        assert_eq!(side.frame_id, 30);
        assert_eq!(side.num_points, 2);
    }
}
