use lidarplan::geometry::Vec3;
use lidarplan::lidar::{read_fixture, scan, write_fixture, LidarConfig, PointCloud};
use lidarplan::perception::{detect_frame, PerceptionConfig};
use lidarplan::world::{load_scenario, World, EGO_ID};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scene(traffic: &str) -> World {
    let text = format!(
        r#"
schema_version = 1
seed = 2
duration = 5.0

[[lanes]]
id = "main"
points = [[0.0, 0.0], [300.0, 0.0]]

[[lanes]]
id = "left"
points = [[0.0, 3.5], [300.0, 3.5]]

[ego]
route = ["main"]
{traffic}
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
fn two_noiseless_cars_are_found_near_truth() {
    let world = scene(
        r#"
[[traffic]]
lane = "main"
start_s = 12.0

[[traffic]]
lane = "left"
start_s = 8.0
"#,
    );
    let cloud = scan(&world, EGO_ID, &noiseless(), &mut ChaCha8Rng::seed_from_u64(1));
    // Round-trip through the fixture format the perception tests consume.
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), "frame", &cloud, world.ego.pose, &noiseless()).unwrap();
    let (cloud, sidecar) = read_fixture(dir.path(), "frame").unwrap();
    assert_eq!(sidecar.num_points, cloud.len());

    let out = detect_frame(&cloud, &PerceptionConfig::default(), &mut ChaCha8Rng::seed_from_u64(2));
    assert!(!out.skipped);
    let truth = world.ground_truth_neighbors(EGO_ID, 20.0);
    assert_eq!(truth.len(), 2);
    assert_eq!(out.detections.len(), 2, "{:?}", out.detections);
    for gt in &truth {
        let best = out
            .detections
            .iter()
            .map(|d| (d.center - gt.position).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(
            best < 0.3,
            "nearest detection {best} m from {:?}: {:?}",
            gt.position,
            out.detections
        );
    }
}

#[test]
fn cars_beyond_roi_are_ignored() {
    let world = scene(
        r#"
[[traffic]]
lane = "main"
start_s = 30.0
"#,
    );
    let cloud = scan(&world, EGO_ID, &noiseless(), &mut ChaCha8Rng::seed_from_u64(1));
    let out = detect_frame(&cloud, &PerceptionConfig::default(), &mut ChaCha8Rng::seed_from_u64(2));
    assert!(out.detections.is_empty());
}

#[test]
fn degenerate_cloud_skips_the_frame() {
    let cloud = PointCloud::new(vec![Vec3::new(1.0, 0.0, -2.0), Vec3::new(2.0, 0.0, -2.0)], 0.0, 7);
    let out = detect_frame(&cloud, &PerceptionConfig::default(), &mut ChaCha8Rng::seed_from_u64(2));
    assert!(out.skipped);
    assert!(out.detections.is_empty());
    assert_eq!(out.frame_id, 7);
}

#[test]
fn default_frame_has_tens_of_thousands_of_points() {
    let world = scene("");
    let cloud = scan(
        &world,
        EGO_ID,
        &LidarConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    assert!((10_000..100_000).contains(&cloud.len()), "{}", cloud.len());
}
