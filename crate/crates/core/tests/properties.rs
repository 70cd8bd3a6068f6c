mod common;

use common::*;
use lidarplan::geometry::{OrientedBox, Pose2, Vec2, Vec3};
use lidarplan::lidar::{scan, LidarConfig, PointCloud};
use lidarplan::perception::{
    crop_roi, detect_frame, l_shape_fit, rule_classify, voxel_downsample, ClassifierConfig, PerceptionConfig,
};
use lidarplan::planner::{
    bspline_resample, generate_collision_free_path, plan_path, plan_speed, speed_obstacle, Blocking, PlannerConfig,
    VehicleInfo,
};
use lidarplan::tracking::compensation::{implied_next_pose, observe};
use lidarplan::tracking::{compensate_ego_motion, gnn_associate, hungarian, EgoMotion};
use lidarplan::world::{load_scenario, World};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn vec2(r: f64) -> impl Strategy<Value = Vec2> {
    (-r..r, -r..r).prop_map(|(x, y)| Vec2::new(x, y))
}

fn vehicle(center: Vec2, yaw: f64, length: f64, width: f64, speed: f64) -> VehicleInfo {
    VehicleInfo {
        corners: OrientedBox::new(center, yaw, length, width).corners(),
        position: center,
        yaw,
        speed,
    }
}

fn vehicles() -> impl Strategy<Value = Vec<VehicleInfo>> {
    prop::collection::vec(
        (vec2(30.0), -PI..PI, 2.0..6.0f64, 1.0..2.5f64, 0.0..10.0f64)
            .prop_map(|(c, yaw, l, w, v)| vehicle(c + Vec2::new(15.0, 0.0), yaw, l, w, v)),
        0..6,
    )
}

/// Random resampled trajectory starting at the origin.
fn trajectory() -> impl Strategy<Value = Vec<Vec2>> {
    prop::collection::vec((1.0..4.0f64, -0.6..0.6f64), 3..20).prop_map(|steps| {
        let mut p = Vec2::zeros();
        let mut heading = 0.0f64;
        let mut wps = vec![p];
        for (d, turn) in steps {
            heading += turn;
            p += Vec2::new(heading.cos(), heading.sin()) * d;
            wps.push(p);
        }
        bspline_resample(&wps, 0.5).points
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn collision_free_prefix_matches_pop_loop(path in trajectory(), vs in vehicles(), t_est in 0.0..2.0f64) {
        let check = generate_collision_free_path(&vs, &path, t_est);
        let groups: Vec<Vec<(Vec2, Vec2)>> = check
            .bounds
            .iter()
            .map(|b| b.segments.iter().map(|s| (s.a, s.b)).collect())
            .collect();
        let kept = &path[..check.keep];
        let all: Vec<(Vec2, Vec2)> = groups.iter().flatten().copied().collect();
        prop_assert!(!polyline_hits(kept, &all), "kept path still crosses a bound");
        let (len, last) = pop_loop(&path, &groups);
        prop_assert_eq!(check.keep, len);
        prop_assert_eq!(check.blocking, last);
    }

    #[test]
    fn planned_speed_is_clamped(
        v in 0.0..15.0f64,
        d_pose in 0.0..20.0f64,
        blocking in prop::option::of((-5.0..40.0f64, 0.0..12.0f64, -PI..PI)),
    ) {
        let cfg = PlannerConfig::default();
        let b = blocking.map(|(distance, speed, yaw)| Blocking { distance, speed, yaw });
        let d = plan_speed(b.as_ref(), v, d_pose, &cfg);
        let cap = cfg.v_max.min((v + cfg.a_max * cfg.dt).max(cfg.v_init));
        prop_assert!(d.v_exc >= 0.0);
        prop_assert!(d.v_exc <= cap + 1e-12);
    }

    #[test]
    fn closer_obstacle_never_speeds_up(d1 in -10.0..50.0f64, gap in 0.0..20.0f64, d_safe in 0.5..20.0f64, v_appr in 0.1..5.0f64) {
        prop_assert!(speed_obstacle(d1 - gap, d_safe, v_appr) <= speed_obstacle(d1, d_safe, v_appr));
    }

    #[test]
    fn resampled_points_are_evenly_spaced(path in trajectory()) {
        for w in path.windows(2).take(path.len().saturating_sub(2)) {
            prop_assert!(((w[1] - w[0]).norm() - 0.5).abs() < 1e-6);
        }
        prop_assert!(path[0].norm() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn gnn_cost_matches_exhaustive(rows in 0usize..=6, cols in 0usize..=6, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cost: Vec<Vec<f64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let assigned = hungarian(&cost);
        if rows == 0 {
            prop_assert!(assigned.is_empty());
            return Ok(());
        }
        let mut used = vec![false; cols];
        let mut total = 0.0;
        let mut count = 0;
        for (i, a) in assigned.iter().enumerate() {
            if let Some(j) = a {
                prop_assert!(!used[*j], "column assigned twice");
                used[*j] = true;
                total += cost[i][*j];
                count += 1;
            }
        }
        prop_assert_eq!(count, rows.min(cols));
        prop_assert!((total - brute_force_min_cost(&cost)).abs() < 1e-9);
    }

    #[test]
    fn gated_association_respects_gate(tracks in prop::collection::vec(vec2(20.0), 0..6), dets in prop::collection::vec(vec2(20.0), 0..6), gate in 0.5..5.0f64) {
        let a = gnn_associate(&tracks, &dets, gate);
        for &(t, d) in &a.matches {
            prop_assert!((tracks[t] - dets[d]).norm() <= gate);
        }
        prop_assert_eq!(a.matches.len() + a.unmatched_tracks.len(), tracks.len());
        prop_assert_eq!(a.matches.len() + a.unmatched_detections.len(), dets.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn compensation_keeps_static_points_fixed(
        pose in (vec2(500.0), -PI..PI),
        theta in -0.5..0.5f64,
        v in 0.0..30.0f64,
        dt in 0.01..0.2f64,
        m in vec2(60.0),
    ) {
        let prev = Pose2::new(pose.0.x, pose.0.y, pose.1);
        let motion = EgoMotion::new(theta, v, dt);
        let next = implied_next_pose(&prev, &motion);
        let world = prev.position() + m;
        let comp = compensate_ego_motion(&[observe(&prev, world)], &motion)[0];
        prop_assert!((comp - observe(&next, world)).norm() < 1e-9);
    }

    #[test]
    fn map_ego_round_trip(p in vec2(1000.0), e in vec2(1000.0), yaw in -PI..PI) {
        let pose = Pose2::new(e.x, e.y, yaw);
        prop_assert!((pose.to_global(pose.to_local(p)) - p).norm() < 1e-9);
        prop_assert!((pose.to_local(p) - to_frame(e, yaw, p)).norm() < 1e-9);
    }
}

/// Points along the two faces of a box visible from the origin.
fn l_points(center: Vec2, yaw: f64, l: f64, w: f64, step: f64) -> Vec<Vec2> {
    let b = OrientedBox::new(center, yaw, l, w);
    let c = b.corners();
    let near = (0..4).min_by(|&i, &j| c[i].norm().total_cmp(&c[j].norm())).unwrap();
    let mut pts = Vec::new();
    for nb in [(near + 1) % 4, (near + 3) % 4] {
        let (a, z) = (c[near], c[nb]);
        let n = ((z - a).norm() / step).ceil() as usize;
        for k in 0..=n {
            pts.push(a + (z - a) * (k as f64 / n as f64));
        }
    }
    pts
}

fn rotate(p: Vec2, a: f64) -> Vec2 {
    Vec2::new(a.cos() * p.x - a.sin() * p.y, a.sin() * p.x + a.cos() * p.y)
}

fn quarter_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI / 2.0);
    d.min(PI / 2.0 - d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lshape_fit_is_rotation_equivariant(
        dist in 6.0..18.0f64,
        bearing in -PI..PI,
        yaw in -PI..PI,
        alpha in -PI..PI,
    ) {
        let center = Vec2::new(bearing.cos(), bearing.sin()) * dist;
        let pts = l_points(center, yaw, 4.5, 1.8, 0.1);
        let rotated: Vec<Vec2> = pts.iter().map(|p| rotate(*p, alpha)).collect();
        let a = l_shape_fit(&pts, 1.0).unwrap();
        let b = l_shape_fit(&rotated, 1.0).unwrap();
        prop_assert!(quarter_diff(b.yaw, a.yaw + alpha) <= 1.0f64.to_radians() + 1e-9, "{} vs {}", b.yaw, a.yaw + alpha);
        prop_assert!((a.length - b.length).abs() < 0.1);
        prop_assert!((a.width - b.width).abs() < 0.1);
    }

    #[test]
    fn classifier_is_conjunction(length in 0.0..8.0f64, width in 0.0..4.0f64, n in 0usize..6000) {
        let c = ClassifierConfig::default();
        let inside = |v: f64, r: [f64; 2]| v >= r[0] && v <= r[1];
        let expected = n >= c.points[0]
            && n <= c.points[1]
            && inside(width, c.width)
            && inside(length, c.length)
            && inside(length * width, c.area)
            && length > 0.0
            && inside(width / length, c.width_length_ratio);
        prop_assert_eq!(rule_classify(&c, length, width, n), expected);
    }
}

fn random_cloud(seed: u64, boxes: usize) -> PointCloud {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<Vec3> = (0..3000)
        .map(|_| {
            Vec3::new(
                rng.random_range(-30.0..30.0),
                rng.random_range(-30.0..30.0),
                -2.0 + rng.random_range(-0.02..0.02),
            )
        })
        .collect();
    for _ in 0..boxes {
        let c = Vec2::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0));
        for _ in 0..200 {
            pts.push(Vec3::new(
                c.x + rng.random_range(-2.0..2.0),
                c.y + rng.random_range(-0.9..0.9),
                rng.random_range(-1.8..-0.5),
            ));
        }
    }
    PointCloud::new(pts, 0.0, 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn pipeline_counts_never_grow(seed in any::<u64>(), boxes in 0usize..4, radius in 5.0..40.0f64) {
        let cloud = random_cloud(seed, boxes);
        let cfg = PerceptionConfig { roi_radius: radius, ..PerceptionConfig::default() };
        let out = detect_frame(&cloud, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let c = out.counts;
        prop_assert!(c.cropped <= c.raw);
        prop_assert!(c.voxelized <= c.cropped);
        prop_assert!(c.nonground <= c.voxelized);
        let cropped = crop_roi(&cloud, radius);
        prop_assert!(cropped.points.iter().all(|p| p.x.hypot(p.y) <= radius));
        prop_assert!(voxel_downsample(&cropped, cfg.voxel_size).len() <= cropped.len());
    }

    #[test]
    fn detection_is_deterministic(seed in any::<u64>(), boxes in 0usize..4) {
        let cloud = random_cloud(seed, boxes);
        let cfg = PerceptionConfig::default();
        let a = detect_frame(&cloud, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = detect_frame(&cloud, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a.detections, b.detections);
        prop_assert_eq!(a.counts, b.counts);
        prop_assert_eq!(a.skipped, b.skipped);
    }
}

fn dyadic(lo: i64, hi: i64) -> impl Strategy<Value = f64> {
    (lo * 64..hi * 64).prop_map(|k| k as f64 / 64.0)
}

fn straight_waypoints(start: Vec2, step: f64, n: usize, bend: f64) -> Vec<Vec2> {
    (1..=n)
        .map(|k| {
            let x = k as f64 * step;
            start + Vec2::new(x, bend * (x * x / 64.0).floor() / 16.0)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Translating map-frame inputs by an exactly representable offset keeps
    /// every ego-frame quantity bit-identical.
    #[test]
    fn plan_is_translation_invariant(
        ex in dyadic(-50, 50),
        ey in dyadic(-50, 50),
        tx in (-4096i64..4096).prop_map(|k| k as f64),
        ty in (-4096i64..4096).prop_map(|k| k as f64),
        bend in -1.0..1.0f64,
        speed in 0.0..10.0f64,
        vs in vehicles(),
    ) {
        let cfg = PlannerConfig::default();
        let start = Vec2::new(ex, ey);
        let wps = straight_waypoints(start, 2.0, 40, (bend * 4.0).round() / 4.0);
        let ego = Pose2::new(ex, ey, 0.0);
        let shifted: Vec<Vec2> = wps.iter().map(|p| p + Vec2::new(tx, ty)).collect();
        let ego2 = Pose2::new(ex + tx, ey + ty, 0.0);
        let a = plan_path(&wps, &ego, speed, &vs, &cfg);
        let b = plan_path(&shifted, &ego2, speed, &vs, &cfg);
        prop_assert_eq!(a, b);
    }

    /// With a rotated ego and arbitrary offsets the plan agrees to rounding.
    #[test]
    fn plan_is_translation_invariant_to_rounding(
        e in vec2(100.0),
        t in vec2(5000.0),
        yaw in -PI..PI,
        speed in 0.0..10.0f64,
    ) {
        let cfg = PlannerConfig::default();
        let dir = Vec2::new(yaw.cos(), yaw.sin());
        let wps: Vec<Vec2> = (1..=40).map(|k| e + dir * (2.0 * k as f64)).collect();
        let shifted: Vec<Vec2> = wps.iter().map(|p| p + t).collect();
        let a = plan_path(&wps, &Pose2::new(e.x, e.y, yaw), speed, &[], &cfg);
        let b = plan_path(&shifted, &Pose2::new(e.x + t.x, e.y + t.y, yaw), speed, &[], &cfg);
        prop_assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (p, q) in a.trajectory.points.iter().zip(&b.trajectory.points) {
            prop_assert!((p - q).norm() < 1e-6);
        }
    }
}

const SCENE: &str = r#"
schema_version = 1
seed = 5
duration = 10.0

[[lanes]]
id = "main"
points = [[0.0, 0.0], [100.0, 0.0], [160.0, 40.0]]

[[lanes]]
id = "side"
points = [[0.0, 3.5], [100.0, 3.5], [160.0, 43.5]]

[ego]
route = ["main"]

[[traffic]]
lane = "main"
start_s = 15.0
initial_speed = 4.0

[[traffic]]
lane = "side"
start_s = 5.0
initial_speed = 7.0
"#;

#[test]
fn cloud_points_are_finite_and_in_range() {
    let world = World::new(load_scenario(SCENE).unwrap()).unwrap();
    let cfg = LidarConfig::default();
    let cloud = scan(&world, 0, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(cloud.len() > 10_000);
    for p in &cloud.points {
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(p.norm() <= cfg.max_range + 6.0 * cfg.range_noise_sigma);
    }
}

#[test]
fn scripted_vehicles_stay_on_their_lanes() {
    let config = load_scenario(SCENE).unwrap();
    let lanes: Vec<String> = config.traffic.iter().map(|t| t.lane.clone()).collect();
    let mut world = World::new(config).unwrap();
    for _ in 0..300 {
        for (i, lane_id) in lanes.iter().enumerate() {
            let v = world.vehicle(i as u32 + 1).unwrap();
            let lane = world.map().lane(lane_id).unwrap();
            let s = lane.centerline.project(v.position, 0.0, lane.length());
            let (on, _) = lane.centerline.pose_at(s);
            assert!((on - v.position).norm() < 1e-6, "vehicle {} off lane", i + 1);
            assert!(v.speed >= 0.0);
            assert!((-PI..PI).contains(&v.yaw));
        }
        world = world.step(0.05);
    }
}
