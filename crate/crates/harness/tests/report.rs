use objdis_core::policies::PolicyKind;
use objdis_harness::experiment::{EpisodeRow, ExperimentResults};
use objdis_harness::report::{curve, emit_report, mean_stderr, swept_axes};
use objdis_harness::HarnessError;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn row(policy: PolicyKind, mult: f64, success: bool) -> EpisodeRow {
    EpisodeRow {
        policy,
        motion_mult: mult,
        depth_severity: 0.0,
        keep_fraction: 1.0,
        present_prob: 1.0,
        confuse_prob: 0.0,
        index: 0,
        config_index: 0,
        seed: 0,
        picked_up: success,
        success,
        disturbed: false,
        length: 10,
        src_visibility: 0.5,
        dst_visibility: 0.5,
        terminal_dest_error: Some(0.01),
        total_reward: 0.0,
        log_hash: String::new(),
    }
}

proptest! {
    #[test]
    fn curves_are_sorted_by_x(mults in prop::collection::vec(0u8..10, 1..40)) {
        let eps: Vec<EpisodeRow> = mults.iter().enumerate()
            .map(|(i, &m)| row(PolicyKind::Estimator, m as f64 * 0.25, i % 2 == 0))
            .collect();
        let pts = curve(&eps, "motion_mult");
        prop_assert!(pts.windows(2).all(|w| w[0].x <= w[1].x));
        let total: usize = pts.iter().filter(|p| p.metric == "SR").map(|p| p.n).sum();
        prop_assert_eq!(total, eps.len());
    }
}

#[test]
fn empty_results_are_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = emit_report(&ExperimentResults::default(), dir.path()).unwrap_err();
    assert!(matches!(e, HarnessError::EmptyResults));
}

#[test]
fn stderr_agrees_with_bootstrap() {
    let mut rng = StdRng::seed_from_u64(3);
    let values: Vec<f64> = (0..300).map(|_| rng.random_range(0.0..1.0f64).powi(2)).collect();
    let (_, se) = mean_stderr(&values);
    let reps = 4000;
    let means: Vec<f64> = (0..reps)
        .map(|_| (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).sum::<f64>() / values.len() as f64)
        .collect();
    let m = means.iter().sum::<f64>() / reps as f64;
    let boot = (means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    assert!((se / boot - 1.0).abs() < 0.05, "{se} vs {boot}");
    assert_eq!(mean_stderr(&[2.0]), (2.0, 0.0));
}

#[test]
fn report_writes_curves_for_swept_axes_only() {
    let eps = vec![
        row(PolicyKind::Estimator, 0.0, true),
        row(PolicyKind::Estimator, 1.0, false),
        row(PolicyKind::GtDirection, 1.0, false),
    ];
    assert_eq!(swept_axes(&eps), vec!["motion_mult"]);
    let dir = tempfile::tempdir().unwrap();
    let results = ExperimentResults {
        episodes: eps,
        ..Default::default()
    };
    let rep = emit_report(&results, dir.path()).unwrap();
    assert_eq!(rep.curve_files, vec![dir.path().join("curve_motion_mult.csv")]);
    let text = std::fs::read_to_string(&rep.curve_files[0]).unwrap();
    assert!(text.starts_with("policy,x,metric,mean,stderr,n"));
    assert!(dir.path().join("summary.txt").exists());
}
