use objdis_core::policies::PolicyKind;
use objdis_core::scene::{generate_task_dataset, SceneParams};
use objdis_harness::config::{ExperimentSpec, CONFIG_SCHEMA_VERSION};
use objdis_harness::dataset::Dataset;
use objdis_harness::experiment::{cells, read_csv, run_experiment, EpisodeRow, ResultRow};

fn spec(dir: &std::path::Path, out: &str) -> ExperimentSpec {
    let data = dir.join("tasks.jsonl");
    if !data.exists() {
        let params = SceneParams::default();
        Dataset {
            configs: generate_task_dataset(0..6, &params, 1).configs,
            params,
        }
        .write(&data)
        .unwrap();
    }
    ExperimentSpec {
        schema_version: CONFIG_SCHEMA_VERSION,
        dataset: data,
        policies: vec![PolicyKind::Estimator],
        motion_multipliers: vec![0.0],
        depth_severities: vec![0.0],
        keep_fractions: vec![1.0],
        present_probs: vec![1.0],
        confuse_probs: vec![0.0],
        episodes_per_cell: 3,
        master_seed: 5,
        output_dir: dir.join(out),
        write_logs: false,
        gzip_logs: false,
        settings: None,
        policy_config: None,
    }
}

#[test]
fn one_cell_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(dir.path(), "one");
    let r = run_experiment(&s).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.rows[0].n, 3);
    assert_eq!(r.episodes.len(), 3);
    let rows: Vec<ResultRow> = read_csv(&dir.path().join("one/results.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let eps: Vec<EpisodeRow> = read_csv(&dir.path().join("one/episodes.csv")).unwrap();
    assert_eq!(eps, r.episodes);
    assert!(!dir.path().join("one/failures.csv").exists());
}

#[test]
fn three_multipliers_give_three_rows_in_grid_order() {
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        motion_multipliers: vec![0.0, 0.5, 1.0],
        write_logs: true,
        gzip_logs: true,
        ..spec(dir.path(), "three")
    };
    let r = run_experiment(&s).unwrap();
    let mults: Vec<f64> = r.rows.iter().map(|row| row.motion_mult).collect();
    assert_eq!(mults, vec![0.0, 0.5, 1.0]);
    assert!(dir.path().join("three/logs/cell002/episode00002.jsonl.gz").exists());
}

#[test]
fn reruns_are_byte_identical_and_cells_keep_their_seeds() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&spec(dir.path(), "a")).unwrap();
    run_experiment(&spec(dir.path(), "b")).unwrap();
    for f in ["results.csv", "episodes.csv"] {
        assert_eq!(
            std::fs::read(dir.path().join("a").join(f)).unwrap(),
            std::fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let small = spec(dir.path(), "c");
    let big = ExperimentSpec {
        policies: vec![PolicyKind::MaskOnly, PolicyKind::Estimator],
        ..spec(dir.path(), "d")
    };
    let seed = |s: &ExperimentSpec| {
        cells(s)
            .into_iter()
            .find(|c| c.policy == PolicyKind::Estimator)
            .unwrap()
            .seed(s.master_seed)
    };
    assert_eq!(seed(&small), seed(&big));
}

#[test]
fn missing_dataset_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let s = ExperimentSpec {
        dataset: dir.path().join("nope.jsonl"),
        ..spec(dir.path(), "x")
    };
    let e = run_experiment(&s).unwrap_err().to_string();
    assert!(e.contains("nope.jsonl"), "{e}");
}
