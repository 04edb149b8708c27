use objdis_core::estimator::{Blend, TargetEstimate};
use objdis_core::geometry::{normalize_yaw, Point3, Pose};
use objdis_core::odometry::{perturb_motion, BodyMotion, MotionNoiseSpec, STEP_LENGTH, TURN_ANGLE};
use objdis_core::scene::{generate_task_dataset, SceneParams, TaskInstance};
use objdis_core::task::{compute_metrics, Action, Done, EpisodeState, EpisodeSummary, NoiseSettings, TaskSettings};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(n: u64) -> Vec<TaskInstance> {
    let params = SceneParams::default();
    generate_task_dataset(0..n, &params, 1)
        .configs
        .iter()
        .map(|c| c.instantiate(&params).unwrap())
        .collect()
}

fn noisy(m: f64) -> NoiseSettings {
    NoiseSettings {
        motion: MotionNoiseSpec::with_multiplier(m),
        ..Default::default()
    }
}

fn same_pose(a: &Pose, b: &Pose, tol: f64) -> bool {
    (a.translation() - b.translation()).norm() <= tol && normalize_yaw(a.yaw - b.yaw).abs() <= tol
}

#[test]
fn random_scripts_never_penetrate_and_disturbance_sticks() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (i, inst) in instances(25).iter().enumerate() {
        let (mut state, _) = EpisodeState::new(inst, TaskSettings::default(), noisy(1.0), i as u64).unwrap();
        let mut was_disturbed = false;
        while state.done == Done::Running {
            let a = Action::ALL[rng.random_range(0..Action::ALL.len())];
            let out = state.step(a).unwrap();
            assert!(state.penetrations().is_empty(), "episode {i}: {:?}", state.penetrations());
            assert!(!was_disturbed || state.disturbed);
            was_disturbed = state.disturbed;
            assert_eq!(out.events.disturbed, state.disturbed);
        }
        assert_eq!(state.step, 200);
        assert_eq!(state.done, Done::Timeout);
        assert!(state.step(Action::MoveAhead).is_err());
    }
}

#[test]
fn episodes_are_deterministic_per_seed() {
    let inst = &instances(3)[1];
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut state, _) = EpisodeState::new(inst, TaskSettings::default(), noisy(1.0), seed).unwrap();
        let mut out = Vec::new();
        for _ in 0..60 {
            out.push(state.step(Action::ALL[rng.random_range(0..11)]).unwrap().record);
        }
        out
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn dead_reckoning_integrates_commands_of_successful_moves() {
    for (i, inst) in instances(10).iter().enumerate() {
        for m in [0.0, 1.0] {
            let (mut state, _) = EpisodeState::new(inst, TaskSettings::default(), noisy(m), 100 + i as u64).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let mut expected = Pose::IDENTITY;
            for _ in 0..80 {
                let a = [Action::MoveAhead, Action::RotateLeft, Action::RotateRight][rng.random_range(0..3)];
                let out = state.step(a).unwrap();
                if !out.events.action_failed {
                    expected = expected.compose(&a.body_motion().unwrap().as_delta());
                }
                assert!(same_pose(&out.observation.dead_reckoned, &expected, 1e-9));
                if m == 0.0 {
                    let truth = state.start_pose.inverse().compose(&state.pose);
                    assert!(same_pose(&expected, &truth, 1e-9));
                }
            }
        }
    }
}

#[test]
fn reward_ledger_sums_entries() {
    let inst = &instances(2)[0];
    let (mut state, _) = EpisodeState::new(inst, TaskSettings::default(), NoiseSettings::default(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut total = 0.0;
    while state.done == Done::Running {
        let out = state.step(Action::ALL[rng.random_range(0..11)]).unwrap();
        let e = out.reward;
        let parts = e.step + e.failed_action + e.success + e.object_observed + e.visit_new_state + e.pickup + e.distance;
        assert_eq!(e.total, parts);
        assert_eq!(e.failed_action != 0.0, out.events.action_failed);
        total += e.total;
    }
    assert!((state.summary().total_reward - total).abs() < 1e-9);
    assert_eq!(state.rewards.entries.len(), 200);
}

#[test]
fn success_requires_pickup() {
    use objdis_core::task::check_success;
    let a = Point3::new(0.0, 0.0, 0.0);
    let b = Point3::new(0.1, 0.0, 0.0);
    assert!(!check_success(false, a, b, 0.2));
    assert!(check_success(true, a, b, 0.2));
    assert!(!check_success(true, a, Point3::new(0.3, 0.0, 0.0), 0.2));
}

#[test]
fn motion_noise_has_the_configured_spread() {
    let spec = MotionNoiseSpec::with_multiplier(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 20_000;
    let sd = |xs: &[f64], mean: f64| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt();
    let moves: Vec<_> = (0..n).map(|_| perturb_motion(BodyMotion::Translate(STEP_LENGTH), &spec, &mut rng)).collect();
    let t: Vec<f64> = moves.iter().map(|m| m.translate).collect();
    let l: Vec<f64> = moves.iter().map(|m| m.lateral_drift).collect();
    assert!((sd(&t, STEP_LENGTH) / spec.trans_sigma_at_1 - 1.0).abs() < 0.03);
    assert!((sd(&l, 0.0) / spec.lateral_sigma_at_1 - 1.0).abs() < 0.03);
    assert!(moves.iter().all(|m| m.rotate == 0.0));
    let r: Vec<f64> = (0..n)
        .map(|_| perturb_motion(BodyMotion::Rotate(TURN_ANGLE), &spec, &mut rng).rotate)
        .collect();
    assert!((sd(&r, TURN_ANGLE) / spec.rot_sigma_at_1 - 1.0).abs() < 0.03);
    let half = MotionNoiseSpec::with_multiplier(0.5);
    let h: Vec<f64> = (0..n)
        .map(|_| perturb_motion(BodyMotion::Translate(STEP_LENGTH), &half, &mut rng).translate)
        .collect();
    assert!((sd(&h, STEP_LENGTH) / (0.5 * spec.trans_sigma_at_1) - 1.0).abs() < 0.03);
}

#[test]
fn ema_and_running_mean_blend_as_expected() {
    let a = Point3::new(1.0, 0.0, 0.0);
    let b = Point3::new(3.0, 0.0, 0.0);
    let c = Point3::new(5.0, 0.0, 0.0);
    let ema = TargetEstimate::new(Blend::Ema { alpha: 0.5 }).fuse(a).fuse(b).fuse(c);
    assert_eq!(ema.position(), Some(Point3::new(3.5, 0.0, 0.0)));
    let mean = TargetEstimate::new(Blend::RunningMean).fuse(a).fuse(b).fuse(c);
    assert_eq!(mean.position(), Some(Point3::new(3.0, 0.0, 0.0)));
    assert_eq!(mean.observation_count, 3);
}

#[test]
fn attached_estimate_rides_with_the_gripper() {
    let est = TargetEstimate::default().fuse(Point3::new(0.1, -0.8, 0.5));
    let held = est.attach(Point3::new(0.1, -0.85, 0.5));
    assert!(held.is_attached());
    let moved = held.follow_gripper(Point3::new(0.3, -1.0, 0.4));
    let p = moved.position().unwrap();
    assert!((p - Point3::new(0.3, -0.95, 0.4)).norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn metrics_form_a_lattice(flags in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..50)) {
        let logs: Vec<EpisodeSummary> = flags
            .iter()
            .map(|&(p, s, d)| EpisodeSummary { picked_up: p, success: p && s, disturbed: d, length: 1, frames: 2, ..Default::default() })
            .collect();
        let m = compute_metrics(&logs).unwrap();
        prop_assert!(m.srwd <= m.sr && m.sr <= m.pu);
    }

    #[test]
    fn propagation_round_trips(x in -3.0..3.0f64, z in -3.0..3.0f64, yaw in -3.0..3.0f64, px in -2.0..2.0f64, pz in 0.0..4.0f64) {
        let ego = Pose::new(x, 0.0, z, yaw);
        let est = TargetEstimate::default().fuse(Point3::new(px, -0.5, pz));
        let (there, _) = est.propagate(&ego);
        let (back, _) = there.propagate(&ego.inverse());
        prop_assert!((back.position().unwrap() - est.position().unwrap()).norm() < 1e-9);
        prop_assert_eq!(back.steps_since_seen, 2);
    }
}

#[test]
fn empty_metrics_input_is_an_error() {
    assert!(compute_metrics(&[]).is_err());
}
