use objdis_core::geometry::{Aabb, CameraModel, Point3, Pose};
use objdis_core::scene::{generate_scene, BodySpec, CategoryId, Scene, SceneObject, SceneParams};
use objdis_core::sensors::{
    apply_depth_noise, degrade_confuse, degrade_missing, degrade_partial, gt_mask, render, DegradationSpec,
    DepthFrame, DepthNoiseSpec, InstanceFrame, Mask,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn room_with_boxes() -> Scene {
    let object = |id, min: Point3, max: Point3| SceneObject {
        id,
        category: CategoryId(id as u16),
        bbox: Aabb::new(min, max),
        movable: true,
        held: false,
    };
    Scene {
        seed: 0,
        bounds: Aabb::new(Point3::new(0.0, -2.5, 0.0), Point3::new(4.0, 0.0, 4.0)),
        furniture: vec![Aabb::new(Point3::new(2.5, -0.8, 2.0), Point3::new(3.5, 0.0, 2.6))],
        objects: vec![
            object(7, Point3::new(1.6, -0.3, 2.2), Point3::new(2.0, 0.0, 2.5)),
            object(9, Point3::new(2.8, -1.0, 2.1), Point3::new(3.0, -0.8, 2.3)),
            object(11, Point3::new(1.0, -0.1, 3.9), Point3::new(1.2, 0.0, 3.95)),
        ],
        body: BodySpec::default(),
        floor_placements: true,
    }
}

/// Reference raycaster: textbook slab test per box, with divisions.
fn reference_ray(scene: &Scene, origin: Point3, dir: Point3) -> (f64, Option<u32>) {
    let mut exit = f64::INFINITY;
    for k in 0..3 {
        let d = dir.component(k);
        let o = origin.component(k);
        if d > 0.0 {
            exit = exit.min((scene.bounds.max.component(k) - o) / d);
        } else if d < 0.0 {
            exit = exit.min((scene.bounds.min.component(k) - o) / d);
        }
    }
    let enter = |b: &Aabb| {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..3 {
            let (o, d) = (origin.component(k), dir.component(k));
            if d == 0.0 {
                if o < b.min.component(k) || o > b.max.component(k) {
                    return None;
                }
                continue;
            }
            let a = (b.min.component(k) - o) / d;
            let c = (b.max.component(k) - o) / d;
            lo = lo.max(a.min(c));
            hi = hi.min(a.max(c));
        }
        (lo <= hi && lo > 0.0).then_some(lo)
    };
    let mut best = (exit, None);
    for f in &scene.furniture {
        if let Some(t) = enter(f) {
            if t < best.0 {
                best = (t, None);
            }
        }
    }
    for o in &scene.objects {
        if let Some(t) = enter(&o.bbox) {
            if t < best.0 {
                best = (t, Some(o.id));
            }
        }
    }
    best
}

fn check_against_reference(scene: &Scene, pose: &Pose, cam: &CameraModel) {
    let (depth, ids) = render(scene, pose, cam);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir = pose.rotate(cam.ray_direction(u as f64, v as f64));
            let (mut t, mut id) = reference_ray(scene, pose.translation(), dir);
            if t >= cam.max_range {
                t = cam.max_range;
                id = None;
            }
            assert!((depth.get(u, v) - t).abs() < 1e-9, "pixel ({u}, {v}): {} vs {t}", depth.get(u, v));
            assert_eq!(ids.get(u, v), id.unwrap_or(InstanceFrame::BACKGROUND), "pixel ({u}, {v})");
        }
    }
}

#[test]
fn renderer_matches_reference_raycaster() {
    let scene = room_with_boxes();
    let cam = CameraModel::from_fov(96, 72, 90.0, 5.0).unwrap();
    for (i, yaw) in [-0.4, 0.0, 0.3, 1.2, 3.0].into_iter().enumerate() {
        // offsets keep rays off exact box corners, where either answer is right
        let pose = Pose::new(1.513 + 0.1 * i as f64, -1.0, 0.617, yaw);
        check_against_reference(&scene, &pose, &cam);
    }
}

#[test]
fn renderer_matches_reference_on_generated_scenes() {
    let params = SceneParams::default();
    let cam = CameraModel::from_fov(64, 64, 90.0, 5.0).unwrap();
    for seed in 0..10 {
        let scene = generate_scene(seed, &params).unwrap();
        let c = scene.bounds.center();
        check_against_reference(&scene, &Pose::new(c.x, -1.0, c.z, seed as f64), &cam);
    }
}

#[test]
fn far_returns_saturate_to_background() {
    let mut scene = room_with_boxes();
    scene.bounds.max.z = 40.0;
    let cam = CameraModel::from_fov(32, 32, 60.0, 5.0).unwrap();
    let (depth, ids) = render(&scene, &Pose::new(0.5, -2.0, 0.1, 0.0), &cam);
    assert!(depth.data().iter().all(|&d| d > 0.0 && d <= 5.0));
    for (i, &d) in depth.data().iter().enumerate() {
        if d == 5.0 {
            assert_eq!(ids.ids()[i], InstanceFrame::BACKGROUND);
        }
    }
}

fn blob(w: u32, h: u32, n: usize) -> Mask {
    let pixels: Vec<(u32, u32)> = (0..n as u32).map(|i| (i % w, i / w % h)).collect();
    Mask::from_pixels(w, h, &pixels)
}

proptest! {
    #[test]
    fn partial_keeps_rounded_subset(n in 0usize..400, frac in 0.0..=1.0f64, seed in any::<u64>()) {
        let mask = blob(20, 20, n);
        let out = degrade_partial(&mask, frac, &mut rng(seed));
        prop_assert_eq!(out.count(), (frac * mask.count() as f64).round() as usize);
        prop_assert!(out.is_subset_of(&mask));
    }

    #[test]
    fn missing_is_all_or_nothing(n in 1usize..400, p in 0.0..=1.0f64, seed in any::<u64>()) {
        let mask = blob(20, 20, n);
        let out = degrade_missing(&mask, p, &mut rng(seed));
        prop_assert!(out == mask || out.is_empty());
    }
}

#[test]
fn missing_rate_matches_probability() {
    let mask = blob(10, 10, 30);
    let mut r = rng(3);
    let trials = 20_000;
    for p in [0.1, 0.3, 0.7] {
        let kept = (0..trials).filter(|_| !degrade_missing(&mask, p, &mut r).is_empty()).count();
        let rate = kept as f64 / trials as f64;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((rate - p).abs() < 4.0 * sd, "p {p}: rate {rate}");
    }
}

#[test]
fn partial_sampling_is_uniform_over_pixels() {
    let mask = blob(10, 10, 50);
    let mut r = rng(4);
    let mut hits = vec![0usize; 100];
    let trials = 10_000;
    for _ in 0..trials {
        for i in degrade_partial(&mask, 0.2, &mut r).set_indices() {
            hits[i] += 1;
        }
    }
    // each pixel kept with probability 10 / 50
    let sd = (trials as f64 * 0.2 * 0.8).sqrt();
    for i in mask.set_indices() {
        assert!((hits[i] as f64 - trials as f64 * 0.2).abs() < 5.0 * sd, "pixel {i}: {}", hits[i]);
    }
}

#[test]
fn confusion_swaps_to_another_visible_object() {
    let ids: Vec<u32> = (0..16).map(|i| if i < 4 { 1 } else if i < 8 { 2 } else { InstanceFrame::BACKGROUND }).collect();
    let frame = InstanceFrame::new(4, 4, ids);
    let mut r = rng(5);
    let trials = 10_000;
    let mut swapped = 0;
    for _ in 0..trials {
        let m = degrade_confuse(&frame, 1, 0.25, &mut r);
        if m == gt_mask(&frame, 2) {
            swapped += 1;
        } else {
            assert_eq!(m, gt_mask(&frame, 1));
        }
    }
    let rate = swapped as f64 / trials as f64;
    assert!((rate - 0.25).abs() < 0.02, "rate {rate}");

    let alone = InstanceFrame::new(2, 1, vec![1, InstanceFrame::BACKGROUND]);
    assert!(degrade_confuse(&alone, 1, 1.0, &mut r).is_empty());
}

#[test]
fn identity_degradation_returns_ground_truth() {
    let frame = InstanceFrame::new(3, 1, vec![4, 4, 5]);
    let spec = DegradationSpec::default();
    assert!(spec.is_identity());
    assert_eq!(spec.apply(&frame, 4, &mut rng(6)), gt_mask(&frame, 4));
    assert!(DegradationSpec {
        keep_fraction: 1.5,
        ..spec
    }
    .validate()
    .is_err());
}

#[test]
fn depth_noise_has_the_modeled_spread() {
    let spec = DepthNoiseSpec {
        lateral_sigma_px: 0.0,
        sigma_coeffs: [0.002, 0.001, 0.003],
        quantization: 0.0,
    };
    let z = 2.0;
    let frame = DepthFrame::new(100, 100, 5.0, vec![z; 10_000]);
    let out = apply_depth_noise(&frame, &spec, &mut rng(7));
    let n = out.data().len() as f64;
    let mean = out.data().iter().sum::<f64>() / n;
    let sd = (out.data().iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let want = 0.002 + 0.001 * z + 0.003 * z * z;
    assert!((sd / want - 1.0).abs() < 0.05, "sd {sd} vs {want}");
    assert!((mean - z).abs() < 4.0 * want / n.sqrt());
}

#[test]
fn depth_noise_leaves_missing_returns_and_respects_identity() {
    let mut data = vec![1.0; 64];
    data[10] = DepthFrame::NO_RETURN;
    let frame = DepthFrame::new(8, 8, 5.0, data);
    assert_eq!(apply_depth_noise(&frame, &DepthNoiseSpec::NONE, &mut rng(8)), frame);
    let noisy = apply_depth_noise(
        &frame,
        &DepthNoiseSpec {
            lateral_sigma_px: 0.0,
            ..DepthNoiseSpec::structured_light()
        },
        &mut rng(8),
    );
    assert_eq!(noisy.data()[10], DepthFrame::NO_RETURN);
    let q = DepthNoiseSpec::structured_light().quantization;
    for &d in noisy.data().iter().filter(|d| **d > 0.0) {
        assert!(((d / q).round() * q - d).abs() < 1e-12);
    }
}

