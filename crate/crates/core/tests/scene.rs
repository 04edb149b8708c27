use std::collections::BTreeMap;

use objdis_core::geometry::{Aabb, Point3, CONTACT_EPS};
use objdis_core::scene::{
    generate_scene, generate_task_dataset, reachable_positions, BodySpec, Scene, SceneParams, TaskConfig,
};
use proptest::prelude::*;

fn empty_room(w: f64, d: f64) -> Scene {
    Scene {
        seed: 0,
        bounds: Aabb::new(Point3::new(0.0, -2.5, 0.0), Point3::new(w, 0.0, d)),
        furniture: Vec::new(),
        objects: Vec::new(),
        body: BodySpec::default(),
        floor_placements: true,
    }
}

/// Independent invariant check: boxes valid, pairwise disjoint, and every
/// movable object resting on the floor or a furniture top under it.
fn invariant_errors(s: &Scene) -> Vec<String> {
    let mut out = Vec::new();
    for (i, a) in s.objects.iter().enumerate() {
        let b = a.bbox;
        if !(b.min.x < b.max.x && b.min.y < b.max.y && b.min.z < b.max.z) {
            out.push(format!("object {} has a degenerate box", a.id));
        }
        for o in &s.objects[i + 1..] {
            let c = o.bbox;
            let overlap = (0..3).all(|k| {
                b.min.component(k) < c.max.component(k) - 1e-9 && c.min.component(k) < b.max.component(k) - 1e-9
            });
            if overlap {
                out.push(format!("objects {} and {} overlap", a.id, o.id));
            }
        }
        for f in &s.furniture {
            let overlap = (0..3).all(|k| {
                b.min.component(k) < f.max.component(k) - 1e-9 && f.min.component(k) < b.max.component(k) - 1e-9
            });
            if overlap {
                out.push(format!("object {} is inside furniture", a.id));
            }
        }
        if a.movable {
            let bottom = b.max.y;
            let cx = (b.min.x + b.max.x) / 2.0;
            let cz = (b.min.z + b.max.z) / 2.0;
            let on_floor = bottom.abs() < 1e-9;
            let on_furniture = s.furniture.iter().any(|f| {
                (f.min.y - bottom).abs() < 1e-9 && cx >= f.min.x && cx <= f.max.x && cz >= f.min.z && cz <= f.max.z
            });
            if !on_floor && !on_furniture {
                out.push(format!("object {} floats", a.id));
            }
        }
    }
    if s.objects.iter().filter(|o| o.held).count() > 1 {
        out.push("more than one held object".into());
    }
    out
}

#[test]
fn thousand_seeds_have_no_invariant_violations() {
    let params = SceneParams::default();
    let mut generated = 0;
    for seed in 0..1000 {
        let Ok(scene) = generate_scene(seed, &params) else { continue };
        generated += 1;
        assert_eq!(invariant_errors(&scene), Vec::<String>::new(), "seed {seed}");
        assert!(scene.violations().is_empty(), "seed {seed}: {:?}", scene.violations());
    }
    assert!(generated > 950, "only {generated} scenes generated");
}

#[test]
fn generation_is_pure() {
    let params = SceneParams::default();
    for seed in [0, 1, 17, 123_456] {
        let a = generate_scene(seed, &params).unwrap().to_json();
        let b = generate_scene(seed, &params).unwrap().to_json();
        assert_eq!(a, b);
    }
}

#[test]
fn scene_json_round_trips() {
    let scene = generate_scene(3, &SceneParams::default()).unwrap();
    let back = Scene::from_json(&scene.to_json()).unwrap();
    assert_eq!(back, scene);
    assert!(scene.to_json().contains("\"schema_version\":1"));
}

#[test]
fn zero_movable_objects_gives_furniture_only() {
    let params = SceneParams {
        movable_count: [0, 0],
        ..SceneParams::default()
    };
    let scene = generate_scene(5, &params).unwrap();
    assert!(scene.objects.iter().all(|o| !o.movable));
    assert!(!scene.furniture.is_empty());
    let data = generate_task_dataset(0..3, &params, 1);
    assert!(data.configs.is_empty());
    assert_eq!(data.skipped.len(), 3);
}

#[test]
fn empty_room_grid_matches_brute_force() {
    let scene = empty_room(2.0, 2.0);
    let grid = reachable_positions(&scene, 0.2);
    let r = scene.body.radius;
    let mut expected = 0;
    for i in 0..=10 {
        for j in 0..=10 {
            let (x, z) = (i as f64 * 0.2, j as f64 * 0.2);
            let inside = x >= r - CONTACT_EPS && x <= 2.0 - r + CONTACT_EPS && z >= r - CONTACT_EPS && z <= 2.0 - r + CONTACT_EPS;
            assert_eq!(grid.contains((i, j)), inside, "cell ({i}, {j})");
            expected += inside as usize;
        }
    }
    assert_eq!(grid.len(), expected);
}

#[test]
fn fully_furnished_room_has_no_positions() {
    let mut scene = empty_room(2.0, 2.0);
    scene.furniture.push(scene.bounds);
    assert!(reachable_positions(&scene, 0.2).is_empty());
}

#[test]
fn finer_grid_is_a_superset() {
    let params = SceneParams::default();
    for seed in 0..20 {
        let scene = generate_scene(seed, &params).unwrap();
        let coarse = reachable_positions(&scene, 0.2);
        let fine = reachable_positions(&scene, 0.1);
        for &(i, j) in &coarse.cells {
            assert!(fine.contains((2 * i, 2 * j)), "seed {seed} cell ({i}, {j})");
        }
    }
}

#[test]
fn task_configs_are_runnable() {
    let params = SceneParams::default();
    let data = generate_task_dataset(0..60, &params, 2);
    assert!(!data.configs.is_empty());
    for c in &data.configs {
        assert_ne!(c.source_category, c.dest_category);
        let inst = c.instantiate(&params).unwrap();
        assert_ne!(inst.source_id, inst.dest_id);
        let grid = reachable_positions(&inst.scene, 0.2);
        let cell = grid.cell_of(c.agent_start.x, c.agent_start.z);
        assert!(grid.contains(cell), "start off the grid: {c:?}");
        assert!(!inst.scene.body_blocked_by_static(c.agent_start.x, c.agent_start.z));
        assert_eq!(invariant_errors(&inst.scene), Vec::<String>::new());
        assert_eq!(TaskConfig::from_json(&c.to_json()).unwrap(), *c);
    }
}

#[test]
fn dataset_generation_is_deterministic() {
    let params = SceneParams::default();
    assert_eq!(generate_task_dataset(0..30, &params, 3), generate_task_dataset(0..30, &params, 3));
}

#[test]
fn category_histogram_is_near_uniform() {
    let params = SceneParams::default();
    let mut configs = generate_task_dataset(0..700, &params, 1).configs;
    assert!(configs.len() >= 500);
    configs.truncate(500);
    let mut counts: BTreeMap<u16, usize> = BTreeMap::new();
    for c in &configs {
        *counts.entry(c.source_category.0).or_default() += 1;
        *counts.entry(c.dest_category.0).or_default() += 1;
    }
    let k = params.categories.len();
    assert_eq!(counts.len(), k);
    let expected = 1000.0 / k as f64;
    for (cat, n) in counts {
        let ratio = n as f64 / expected;
        assert!((0.8..=1.2).contains(&ratio), "category {cat}: {n} vs {expected:.1}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_seed_gives_a_valid_scene_or_a_named_error(seed in any::<u64>()) {
        match generate_scene(seed, &SceneParams::default()) {
            Ok(scene) => {
                prop_assert!(invariant_errors(&scene).is_empty());
                prop_assert_eq!(scene.seed, seed);
            }
            Err(e) => prop_assert!(e.to_string().contains(&seed.to_string())),
        }
    }
}
