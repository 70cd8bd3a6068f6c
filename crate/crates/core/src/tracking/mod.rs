//! Multi-vehicle tracking: UKF with a CTRV motion model, gated optimal
//! association and a hit/miss track lifecycle. Tracks live in the current
//! ego frame (x forward, y left) and are moved into each new frame with the
//! ego-motion compensation before prediction.

pub mod assignment;
pub mod compensation;
pub mod ukf;

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assignment::{gnn_associate, hungarian, Association};
pub use compensation::{compensate_ego_motion, compensate_vehicle_point, EgoMotion};
pub use ukf::{UkfError, UnscentedParams};

use crate::geometry::{wrap_angle, OrientedBox, Vec2};
use crate::perception::DetectedVehicle;

const YAW: usize = 2;
const V: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackingError {
    #[error(transparent)]
    Ukf(#[from] UkfError),
    #[error("insufficient history: {0} positions")]
    InsufficientHistory(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Association gate, meters.
    pub gate: f64,
    /// Speeds below this are labelled static, m/s.
    pub static_speed: f64,
    pub confirm_hits: u32,
    /// A tentative track must be confirmed within this many frames.
    pub confirm_window: u32,
    pub tentative_max_misses: u32,
    pub max_misses: u32,
    pub accel_std: f64,
    pub yaw_accel_std: f64,
    pub meas_pos_std: f64,
    pub meas_yaw_std: f64,
    pub meas_vel_std: f64,
    pub init_pos_std: f64,
    pub init_yaw_std: f64,
    pub init_speed_std: f64,
    pub init_yaw_rate_std: f64,
    /// Number of past positions in the finite-difference velocity fit.
    pub velocity_window: usize,
    /// Positions needed before the fitted velocity is fused.
    pub velocity_min_samples: usize,
    /// Fraction of a larger observed extent adopted per update.
    pub extent_grow: f64,
    /// Fraction of a smaller observed extent adopted per update.
    pub extent_decay: f64,
    pub reinit_speed: f64,
    pub reinit_angle_deg: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate: 2.5,
            static_speed: 0.5,
            confirm_hits: 3,
            confirm_window: 5,
            tentative_max_misses: 2,
            max_misses: 5,
            accel_std: 2.0,
            yaw_accel_std: 1.0,
            meas_pos_std: 0.15,
            meas_yaw_std: 0.08,
            meas_vel_std: 0.6,
            init_pos_std: 0.5,
            init_yaw_std: 0.3,
            init_speed_std: 6.0,
            init_yaw_rate_std: 0.3,
            velocity_window: 10,
            velocity_min_samples: 5,
            extent_grow: 0.5,
            extent_decay: 0.02,
            reinit_speed: 1.0,
            reinit_angle_deg: 60.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("gate", self.gate),
            ("static_speed", self.static_speed),
            ("accel_std", self.accel_std),
            ("yaw_accel_std", self.yaw_accel_std),
            ("meas_pos_std", self.meas_pos_std),
            ("meas_yaw_std", self.meas_yaw_std),
            ("meas_vel_std", self.meas_vel_std),
            ("init_pos_std", self.init_pos_std),
            ("init_yaw_std", self.init_yaw_std),
            ("init_speed_std", self.init_speed_std),
            ("init_yaw_rate_std", self.init_yaw_rate_std),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be > 0"));
            }
        }
        if self.confirm_hits == 0 || self.max_misses == 0 || self.tentative_max_misses == 0 {
            return Err("lifecycle counts must be >= 1".into());
        }
        if self.confirm_window < self.confirm_hits {
            return Err("confirm_window must be >= confirm_hits".into());
        }
        if self.velocity_min_samples < 2 || self.velocity_min_samples > self.velocity_window {
            return Err("need 2 <= velocity_min_samples <= velocity_window".into());
        }
        for (name, v) in [("extent_grow", self.extent_grow), ("extent_decay", self.extent_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(format!("{name} must be in (0, 1]"));
            }
        }
        Ok(())
    }

    fn measurement_noise(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.meas_pos_std.powi(2),
            self.meas_pos_std.powi(2),
            self.meas_yaw_std.powi(2),
        ]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Dead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// `(x, y, yaw, v, yaw_rate)`
    pub state: Vector5<f64>,
    pub covariance: Matrix5<f64>,
    /// `(length, width)` along and across the track heading.
    pub extent: [f64; 2],
    pub hits: u32,
    pub misses: u32,
    pub age: u32,
    pub status: TrackStatus,
    /// Past measured centres `(time, position)`, expressed in the current frame.
    pub history: VecDeque<(f64, Vec2)>,
    pub last_nis: Option<f64>,
}

impl Track {
    pub fn new(id: u64, det: &DetectedVehicle, time: f64, config: &TrackerConfig) -> Self {
        let state = Vector5::new(det.center.x, det.center.y, det.yaw, 0.0, 0.0);
        let covariance = Matrix5::from_diagonal(&Vector5::new(
            config.init_pos_std.powi(2),
            config.init_pos_std.powi(2),
            config.init_yaw_std.powi(2),
            config.init_speed_std.powi(2),
            config.init_yaw_rate_std.powi(2),
        ));
        let mut history = VecDeque::new();
        history.push_back((time, det.center));
        Self {
            id,
            state,
            covariance,
            extent: det.extent,
            hits: 1,
            misses: 0,
            age: 1,
            status: TrackStatus::Tentative,
            history,
            last_nis: None,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.state[0], self.state[1])
    }

    pub fn yaw(&self) -> f64 {
        self.state[YAW]
    }

    pub fn speed(&self) -> f64 {
        self.state[V]
    }

    pub fn is_static(&self, threshold: f64) -> bool {
        self.speed().abs() < threshold
    }

    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(self.position(), self.yaw(), self.extent[0], self.extent[1])
    }

    /// Flip to a non-negative speed, keeping the represented motion.
    fn normalize(&mut self) {
        if self.state[V] < 0.0 {
            self.state[V] = -self.state[V];
            self.state[YAW] = wrap_angle(self.state[YAW] + PI);
            let mut j = Matrix5::identity();
            j[(V, V)] = -1.0;
            self.covariance = j * self.covariance * j;
        }
        self.state[YAW] = wrap_angle(self.state[YAW]);
    }

    /// Move the track and its history into the next ego frame.
    pub fn compensate(&mut self, motion: &EgoMotion) {
        let p = compensate_vehicle_point(self.position(), motion);
        self.state[0] = p.x;
        self.state[1] = p.y;
        // Rotation seen in the vehicle frame equals the one applied by the transform.
        let rot = motion.theta_ego;
        self.state[YAW] = wrap_angle(self.state[YAW] + rot);
        let (s, c) = rot.sin_cos();
        let mut r = Matrix5::identity();
        r[(0, 0)] = c;
        r[(0, 1)] = -s;
        r[(1, 0)] = s;
        r[(1, 1)] = c;
        self.covariance = r * self.covariance * r.transpose();
        for (_, h) in self.history.iter_mut() {
            *h = compensate_vehicle_point(*h, motion);
        }
    }

    pub fn record(&self, frame_id: u64, time: f64, static_speed: f64) -> TrackRecord {
        TrackRecord {
            frame_id,
            time,
            id: self.id,
            status: self.status,
            x: self.state[0],
            y: self.state[1],
            yaw: self.state[YAW],
            v: self.state[V],
            yaw_rate: self.state[4],
            cov_diag: [
                self.covariance[(0, 0)],
                self.covariance[(1, 1)],
                self.covariance[(2, 2)],
                self.covariance[(3, 3)],
                self.covariance[(4, 4)],
            ],
            length: self.extent[0],
            width: self.extent[1],
            is_static: self.is_static(static_speed),
        }
    }
}

/// One line of `tracks.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub frame_id: u64,
    pub time: f64,
    pub id: u64,
    pub status: TrackStatus,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub v: f64,
    pub yaw_rate: f64,
    pub cov_diag: [f64; 5],
    pub length: f64,
    pub width: f64,
    pub is_static: bool,
}

impl TrackRecord {
    pub fn bev_box(&self) -> OrientedBox {
        OrientedBox::new(Vec2::new(self.x, self.y), self.yaw, self.length, self.width)
    }
}

/// Constant turn rate and velocity process with noise `(accel, yaw_accel)`.
pub fn ctrv_process(x: &DVector<f64>, w: &DVector<f64>, dt: f64) -> DVector<f64> {
    let (px, py, yaw, v, yr) = (x[0], x[1], x[2], x[3], x[4]);
    let (a, yd) = (w[0], w[1]);
    let (nx, ny) = if yr.abs() > 1e-6 {
        (
            px + v / yr * ((yaw + yr * dt).sin() - yaw.sin()),
            py + v / yr * (yaw.cos() - (yaw + yr * dt).cos()),
        )
    } else {
        (px + v * yaw.cos() * dt, py + v * yaw.sin() * dt)
    };
    let dt2 = 0.5 * dt * dt;
    DVector::from_vec(vec![
        nx + dt2 * yaw.cos() * a,
        ny + dt2 * yaw.sin() * a,
        yaw + yr * dt + dt2 * yd,
        v + dt * a,
        yr + dt * yd,
    ])
}

fn to_dyn(track: &Track) -> (DVector<f64>, DMatrix<f64>) {
    (
        DVector::from_column_slice(track.state.as_slice()),
        DMatrix::from_column_slice(5, 5, track.covariance.as_slice()),
    )
}

fn from_dyn(track: &mut Track, m: &DVector<f64>, p: &DMatrix<f64>) {
    track.state = Vector5::from_column_slice(m.as_slice());
    track.covariance = Matrix5::from_column_slice(p.as_slice());
}

/// Small covariance floor added every prediction.
fn process_floor() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![1e-4, 1e-4, 1e-5, 1e-4, 1e-5]))
}

/// Unscented CTRV prediction over `dt`.
pub fn ukf_predict(track: &Track, dt: f64, config: &TrackerConfig) -> Result<Track, UkfError> {
    let (m, p) = to_dyn(track);
    let q = [config.accel_std.powi(2), config.yaw_accel_std.powi(2)];
    let (m2, p2) = ukf::predict_augmented(
        &m,
        &p,
        &q,
        &process_floor(),
        &UnscentedParams::default(),
        &[YAW],
        |x, w| ctrv_process(x, w, dt),
    )?;
    let mut out = track.clone();
    from_dyn(&mut out, &m2, &p2);
    out.normalize();
    Ok(out)
}

/// Detection yaw shifted by a multiple of a quarter turn to lie nearest
/// `reference`, and whether the shift swaps length and width.
pub fn disambiguate_yaw(detected: f64, reference: f64) -> (f64, bool) {
    let k = (wrap_angle(detected - reference) / FRAC_PI_2).round();
    let yaw = wrap_angle(detected - k * FRAC_PI_2);
    (yaw, (k as i64).rem_euclid(2) == 1)
}

/// Full-size box centre implied by the detected corner nearest the sensor.
pub fn anchored_center(det: &DetectedVehicle, yaw: f64, extent: [f64; 2]) -> Vec2 {
    let anchor = det.anchor_corner();
    let e1 = Vec2::new(yaw.cos(), yaw.sin());
    let e2 = Vec2::new(-yaw.sin(), yaw.cos());
    let rel = anchor - det.center;
    let s1 = if rel.dot(&e1) >= 0.0 { 1.0 } else { -1.0 };
    let s2 = if rel.dot(&e2) >= 0.0 { 1.0 } else { -1.0 };
    anchor - e1 * (s1 * 0.5 * extent[0]) - e2 * (s2 * 0.5 * extent[1])
}

fn smooth(current: f64, observed: f64, config: &TrackerConfig) -> f64 {
    let gain = if observed > current {
        config.extent_grow
    } else {
        config.extent_decay
    };
    current + gain * (observed - current)
}

/// Position and yaw update from an associated detection.
pub fn ukf_update(track: &Track, det: &DetectedVehicle, config: &TrackerConfig) -> Result<Track, UkfError> {
    let (yaw_m, swapped) = disambiguate_yaw(det.yaw, track.yaw());
    let observed = if swapped {
        [det.extent[1], det.extent[0]]
    } else {
        det.extent
    };
    let mut out = track.clone();
    out.extent = [
        smooth(track.extent[0], observed[0], config),
        smooth(track.extent[1], observed[1], config),
    ];
    let center = anchored_center(det, yaw_m, out.extent);
    let z = DVector::from_vec(vec![center.x, center.y, yaw_m]);
    let (m, p) = to_dyn(track);
    let upd = ukf::update(
        &m,
        &p,
        &z,
        &config.measurement_noise(),
        &UnscentedParams::default(),
        &[YAW],
        &[2],
        |x| DVector::from_vec(vec![x[0], x[1], x[2]]),
    )?;
    from_dyn(&mut out, &upd.mean, &upd.cov);
    out.last_nis = Some(upd.nis());
    out.normalize();
    Ok(out)
}

/// Fuse a velocity vector `(vx, vy)` as a measurement of `(v cos yaw, v sin yaw)`.
/// `variance` is per axis; it is floored at `meas_vel_std²`.
pub fn fuse_velocity(track: &Track, velocity: Vec2, variance: f64, config: &TrackerConfig) -> Result<Track, UkfError> {
    let (m, p) = to_dyn(track);
    let z = DVector::from_vec(vec![velocity.x, velocity.y]);
    let r = DMatrix::from_diagonal_element(2, 2, variance.max(config.meas_vel_std.powi(2)));
    let upd = ukf::update(&m, &p, &z, &r, &UnscentedParams::default(), &[YAW], &[], |x| {
        DVector::from_vec(vec![x[V] * x[YAW].cos(), x[V] * x[YAW].sin()])
    })?;
    let mut out = track.clone();
    from_dyn(&mut out, &upd.mean, &upd.cov);
    out.normalize();
    Ok(out)
}

/// Least-squares velocity of `(time, position)` samples in a common frame.
pub fn regress_velocity(samples: &[(f64, Vec2)]) -> Result<Vec2, TrackingError> {
    velocity_fit(samples).map(|f| f.0)
}

/// Least-squares velocity plus the per-axis variance of the slope, taken
/// from the fit residuals (zero with fewer than three samples).
pub fn velocity_fit(samples: &[(f64, Vec2)]) -> Result<(Vec2, f64), TrackingError> {
    let n = samples.len();
    if n < 2 {
        return Err(TrackingError::InsufficientHistory(n));
    }
    let tm = samples.iter().map(|s| s.0).sum::<f64>() / n as f64;
    let pm = samples.iter().fold(Vec2::zeros(), |a, s| a + s.1) / n as f64;
    let mut stt = 0.0;
    let mut stp = Vec2::zeros();
    for (t, p) in samples {
        stt += (t - tm) * (t - tm);
        stp += (p - pm) * (t - tm);
    }
    if stt <= 0.0 {
        return Err(TrackingError::InsufficientHistory(n));
    }
    let v = stp / stt;
    if n < 3 {
        return Ok((v, 0.0));
    }
    let rss: f64 = samples
        .iter()
        .map(|(t, p)| (p - pm - v * (t - tm)).norm_squared())
        .sum();
    let sigma2 = rss / (2.0 * (n as f64 - 2.0));
    Ok((v, sigma2 / stt))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub speed: f64,
    pub yaw: f64,
    pub is_static: bool,
    /// Variance of the speed estimate, m²/s².
    pub variance: f64,
}

/// Velocity from raw per-frame observations, each in its own ego frame.
///
/// `observations[i]` is `(time, position)` of frame `i`; `motions[i]` is the
/// ego motion from frame `i` to frame `i + 1`.
pub fn estimate_velocity(
    observations: &[(f64, Vec2)],
    motions: &[EgoMotion],
    static_speed: f64,
) -> Result<VelocityEstimate, TrackingError> {
    if observations.len() < 2 || motions.len() + 1 != observations.len() {
        return Err(TrackingError::InsufficientHistory(observations.len()));
    }
    let mut compensated: Vec<(f64, Vec2)> = Vec::with_capacity(observations.len());
    for (i, &(t, p)) in observations.iter().enumerate() {
        let mut q = p;
        for m in &motions[i..] {
            q = compensate_vehicle_point(q, m);
        }
        compensated.push((t, q));
    }
    let (v, variance) = velocity_fit(&compensated)?;
    let speed = v.norm();
    Ok(VelocityEstimate {
        speed,
        yaw: v.y.atan2(v.x),
        is_static: speed < static_speed,
        variance,
    })
}

/// Speed estimate reported when there is not enough history.
pub fn static_fallback() -> VelocityEstimate {
    VelocityEstimate {
        speed: 0.0,
        yaw: 0.0,
        is_static: true,
        variance: 100.0,
    }
}

/// Lifecycle bookkeeping after association. `tracks` must already hold the
/// updated states of matched tracks.
pub fn manage_tracks(
    mut tracks: Vec<Track>,
    assoc: &Association,
    detections: &[DetectedVehicle],
    time: f64,
    next_id: &mut u64,
    config: &TrackerConfig,
) -> Vec<Track> {
    let mut matched = vec![false; tracks.len()];
    for &(t, _) in &assoc.matches {
        matched[t] = true;
    }
    for (track, hit) in tracks.iter_mut().zip(&matched) {
        track.age += 1;
        if *hit {
            track.hits += 1;
            track.misses = 0;
        } else {
            track.misses += 1;
        }
        track.status = match track.status {
            TrackStatus::Tentative if track.hits >= config.confirm_hits => TrackStatus::Confirmed,
            TrackStatus::Tentative
                if track.misses >= config.tentative_max_misses || track.age > config.confirm_window =>
            {
                TrackStatus::Dead
            }
            TrackStatus::Confirmed if track.misses >= config.max_misses => TrackStatus::Dead,
            s => s,
        };
    }
    tracks.retain(|t| t.status != TrackStatus::Dead);
    for &j in &assoc.unmatched_detections {
        tracks.push(Track::new(*next_id, &detections[j], time, config));
        *next_id += 1;
    }
    tracks
}

/// Per-frame tracking state machine.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
    last_time: Option<f64>,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_time: None,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.status == TrackStatus::Confirmed)
    }

    /// Advance all tracks to `time`, moving them by `motion` into the current
    /// ego frame, and absorb `detections`. `detections = None` marks a frame
    /// whose detection stage was skipped.
    pub fn step(&mut self, time: f64, motion: Option<&EgoMotion>, detections: Option<&[DetectedVehicle]>) {
        let dt = self.last_time.map_or(0.0, |t| (time - t).max(0.0));
        self.last_time = Some(time);
        let cfg = &self.config;
        let mut predicted = Vec::with_capacity(self.tracks.len());
        for mut track in std::mem::take(&mut self.tracks) {
            if let Some(m) = motion {
                track.compensate(m);
            }
            // A second failure after jitter drops the track.
            if let Ok(t) = ukf_predict(&track, dt, cfg) {
                predicted.push(t);
            }
        }
        let Some(detections) = detections else {
            self.tracks = predicted;
            return;
        };
        let positions: Vec<Vec2> = predicted.iter().map(|t| t.position()).collect();
        let centers: Vec<Vec2> = detections.iter().map(|d| d.center).collect();
        let assoc = gnn_associate(&positions, &centers, cfg.gate);
        let mut failed = Vec::new();
        for &(ti, di) in &assoc.matches {
            match self.absorb(&predicted[ti], &detections[di], time) {
                Some(t) => predicted[ti] = t,
                None => failed.push(predicted[ti].id),
            }
        }
        let mut tracks = manage_tracks(predicted, &assoc, detections, time, &mut self.next_id, &self.config);
        tracks.retain(|t| !failed.contains(&t.id));
        self.tracks = tracks;
    }

    fn absorb(&self, track: &Track, det: &DetectedVehicle, time: f64) -> Option<Track> {
        let cfg = &self.config;
        let mut t = ukf_update(track, det, cfg).ok()?;
        let (yaw_m, _) = disambiguate_yaw(det.yaw, t.yaw());
        let center = anchored_center(det, yaw_m, t.extent);
        t.history.push_back((time, center));
        while t.history.len() > cfg.velocity_window {
            t.history.pop_front();
        }
        if t.history.len() >= cfg.velocity_min_samples {
            let samples: Vec<(f64, Vec2)> = t.history.iter().copied().collect();
            if let Ok((vel, var)) = velocity_fit(&samples) {
                let speed = vel.norm();
                let heading = vel.y.atan2(vel.x);
                // Heading re-initialisation only trusts a full window and a
                // speed well clear of the fit noise.
                if t.history.len() == cfg.velocity_window
                    && speed > cfg.reinit_speed
                    && speed > 3.0 * var.sqrt()
                    && wrap_angle(heading - t.yaw()).abs() > cfg.reinit_angle_deg.to_radians()
                {
                    t.state[YAW] = heading;
                    t.state[V] = speed;
                    for i in 0..5 {
                        for k in [YAW, V] {
                            t.covariance[(i, k)] = 0.0;
                            t.covariance[(k, i)] = 0.0;
                        }
                    }
                    t.covariance[(YAW, YAW)] = cfg.init_yaw_std.powi(2);
                    t.covariance[(V, V)] = cfg.meas_vel_std.powi(2);
                }
                t = fuse_velocity(&t, vel, var, cfg).ok()?;
            }
        }
        // A static box has no preferred heading; keep its yaw on the long side.
        if t.is_static(cfg.static_speed) && t.extent[1] > t.extent[0] {
            t.extent.swap(0, 1);
            t.state[YAW] = wrap_angle(t.state[YAW] + FRAC_PI_2);
        }
        Some(t)
    }

    pub fn records(&self, frame_id: u64, time: f64) -> Vec<TrackRecord> {
        self.tracks
            .iter()
            .map(|t| t.record(frame_id, time, self.config.static_speed))
            .collect()
    }
}
