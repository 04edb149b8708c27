use std::io::Read;

use flate2::read::GzDecoder;
use objdis_core::geometry::{Aabb, Point3};
use objdis_core::policies::PolicyKind;
use objdis_core::scene::{generate_task_dataset, SceneParams, TaskConfig};
use objdis_core::task::{Done, NoiseSettings};
use objdis_harness::runner::{run_episode, run_instance, EpisodeSpec};

fn first_config() -> (SceneParams, TaskConfig) {
    let params = SceneParams::default();
    let c = generate_task_dataset(0..5, &params, 1).configs.remove(0);
    (params, c)
}

#[test]
fn episode_runs_to_a_terminal_state() {
    let (params, config) = first_config();
    for kind in PolicyKind::ALL {
        let log = run_episode(&config, &params, &EpisodeSpec::new(kind, NoiseSettings::default()), 1).unwrap();
        assert_ne!(log.done, Done::Running);
        assert_eq!(log.records.len() as u32, log.summary.length);
        assert!(log.summary.length <= 200);
        assert_eq!(log.done == Done::Success, log.summary.success);
    }
}

#[test]
fn log_hash_depends_only_on_inputs() {
    let (params, config) = first_config();
    let spec = EpisodeSpec::new(PolicyKind::Estimator, NoiseSettings::default());
    let a = run_episode(&config, &params, &spec, 42).unwrap();
    let b = run_episode(&config, &params, &spec, 42).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 64);
    assert_eq!(a.to_jsonl().lines().count(), a.records.len());
}

#[test]
fn logs_write_plain_and_gzipped() {
    let (params, config) = first_config();
    let log = run_episode(&config, &params, &EpisodeSpec::new(PolicyKind::GtDirection, NoiseSettings::default()), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let plain = dir.path().join("a/ep.jsonl");
    let gz = dir.path().join("b/ep.jsonl.gz");
    log.write(&plain, false).unwrap();
    log.write(&gz, true).unwrap();
    let mut unzipped = String::new();
    GzDecoder::new(std::fs::File::open(&gz).unwrap()).read_to_string(&mut unzipped).unwrap();
    assert_eq!(std::fs::read_to_string(&plain).unwrap(), unzipped);
    assert_eq!(unzipped, log.to_jsonl());
}

#[test]
fn walled_in_agent_times_out() {
    let (params, config) = first_config();
    let mut inst = config.instantiate(&params).unwrap();
    let (x, z) = (config.agent_start.x, config.agent_start.z);
    let r = 0.45;
    let wall = |x0: f64, z0: f64, x1: f64, z1: f64| Aabb::new(Point3::new(x0, -2.0, z0), Point3::new(x1, 0.0, z1));
    inst.scene.furniture.extend([
        wall(x - r - 0.05, z - r - 0.05, x + r + 0.05, z - r),
        wall(x - r - 0.05, z + r, x + r + 0.05, z + r + 0.05),
        wall(x - r - 0.05, z - r, x - r, z + r),
        wall(x + r, z - r, x + r + 0.05, z + r),
    ]);
    let source = inst.scene.object(inst.source_id).unwrap().bbox.center();
    assert!((source.x - x).abs() > r || (source.z - z).abs() > r, "source inside the pen");
    let log = run_instance(&inst, &EpisodeSpec::new(PolicyKind::GtDirection, NoiseSettings::default()), 0).unwrap();
    assert_eq!(log.done, Done::Timeout);
    assert_eq!(log.summary.length, 200);
    assert!(!log.summary.picked_up);
}
