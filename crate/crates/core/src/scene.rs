//! Procedural kitchen-like rooms, the reachable floor grid, and task
//! configuration datasets.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::ops::Range;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Point3, Pose, CONTACT_EPS};
use crate::seeding::{self, SimRng};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene seed {seed}: {reason}")]
    Generation { seed: u64, reason: String },
    #[error("task config (scene seed {seed}): {reason}")]
    InvalidTask { seed: u64, reason: String },
    #[error("unsupported schema_version {0}")]
    Schema(u32),
    #[error("json: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(pub u16);

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cat{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    /// Canonical box extents (width, height, depth) in meters.
    pub size: [f64; 3],
}

impl Category {
    pub fn size(&self) -> Point3 {
        Point3::new(self.size[0], self.size[1], self.size[2])
    }
}

/// The twelve kitchen categories with desk-scale canonical sizes.
pub fn default_categories() -> Vec<Category> {
    const TABLE: [(&str, [f64; 3]); 12] = [
        ("Apple", [0.08, 0.08, 0.08]),
        ("Bread", [0.10, 0.07, 0.10]),
        ("Tomato", [0.07, 0.06, 0.07]),
        ("Lettuce", [0.10, 0.09, 0.10]),
        ("Pot", [0.10, 0.08, 0.10]),
        ("Mug", [0.08, 0.09, 0.08]),
        ("Potato", [0.08, 0.06, 0.07]),
        ("Pan", [0.10, 0.05, 0.10]),
        ("Egg", [0.05, 0.06, 0.05]),
        ("Spatula", [0.06, 0.04, 0.10]),
        ("Cup", [0.07, 0.09, 0.07]),
        ("SoapBottle", [0.06, 0.10, 0.06]),
    ];
    TABLE
        .iter()
        .enumerate()
        .map(|(i, (name, size))| Category {
            id: CategoryId(i as u16),
            name: (*name).to_string(),
            size: *size,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub category: CategoryId,
    #[serde(rename = "box")]
    pub bbox: Aabb,
    pub movable: bool,
    pub held: bool,
}

/// The agent's body: a vertical cylinder standing on the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodySpec {
    pub radius: f64,
    pub height: f64,
}

impl Default for BodySpec {
    fn default() -> Self {
        Self {
            radius: 0.2,
            height: 1.0,
        }
    }
}

impl BodySpec {
    /// Whether the body standing at `(x, z)` interpenetrates `b`.
    pub fn collides_with(&self, x: f64, z: f64, b: &Aabb) -> bool {
        let vertical = b.min.y < -CONTACT_EPS && b.max.y > -self.height + CONTACT_EPS;
        vertical && b.footprint_distance(x, z) < self.radius - CONTACT_EPS
    }

    pub fn inside_room(&self, x: f64, z: f64, room: &Aabb) -> bool {
        x >= room.min.x + self.radius - CONTACT_EPS
            && x <= room.max.x - self.radius + CONTACT_EPS
            && z >= room.min.z + self.radius - CONTACT_EPS
            && z <= room.max.z - self.radius + CONTACT_EPS
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub room_width: [f64; 2],
    pub room_depth: [f64; 2],
    pub room_height: f64,
    pub furniture_count: [u32; 2],
    pub furniture_height: [f64; 2],
    pub counter_depth: [f64; 2],
    pub counter_length: [f64; 2],
    pub island_size: [f64; 2],
    /// Minimum free gap between furniture pieces and to walls (islands).
    pub aisle: f64,
    pub movable_count: [u32; 2],
    pub categories: Vec<Category>,
    /// Chance that an object (or a task placement) uses the floor.
    pub floor_probability: f64,
    pub max_attempts: u32,
    pub body: BodySpec,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            room_width: [3.6, 5.0],
            room_depth: [3.6, 5.0],
            room_height: 2.5,
            furniture_count: [3, 5],
            furniture_height: [0.7, 0.9],
            counter_depth: [0.35, 0.45],
            counter_length: [0.9, 1.6],
            island_size: [0.6, 0.9],
            aisle: 0.7,
            movable_count: [6, 10],
            categories: default_categories(),
            floor_probability: 0.1,
            max_attempts: 200,
            body: BodySpec::default(),
        }
    }
}

impl SceneParams {
    pub fn category(&self, id: CategoryId) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    /// Interior of the room; walls, floor and ceiling are its faces.
    pub bounds: Aabb,
    pub furniture: Vec<Aabb>,
    pub objects: Vec<SceneObject>,
    pub body: BodySpec,
    pub floor_placements: bool,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    inner: T,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: u32) -> Option<&mut SceneObject> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn object_by_category(&self, category: CategoryId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.category == category)
    }

    pub fn movable_categories(&self) -> Vec<CategoryId> {
        self.objects
            .iter()
            .filter(|o| o.movable)
            .map(|o| o.category)
            .collect()
    }

    /// Whether `b` interpenetrates furniture or leaves the room.
    pub fn blocked_by_static(&self, b: &Aabb) -> bool {
        !self.bounds.encloses(b) || self.furniture.iter().any(|f| f.intersects(b))
    }

    pub fn point_blocked_by_static(&self, p: Point3) -> bool {
        !self.bounds.contains(p) || self.furniture.iter().any(|f| f.penetrated_by(p))
    }

    pub fn body_blocked_by_static(&self, x: f64, z: f64) -> bool {
        !self.body.inside_room(x, z, &self.bounds)
            || self.furniture.iter().any(|f| self.body.collides_with(x, z, f))
    }

    /// Returns every invariant violation; an empty list means the scene is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.bounds.is_valid() {
            out.push("room bounds are degenerate".to_string());
        }
        for (i, f) in self.furniture.iter().enumerate() {
            if !f.is_valid() {
                out.push(format!("furniture {i} is degenerate"));
            }
            if !self.bounds.encloses(f) {
                out.push(format!("furniture {i} leaves the room"));
            }
        }
        let mut ids = BTreeSet::new();
        let mut held = 0;
        for o in &self.objects {
            if !ids.insert(o.id) {
                out.push(format!("duplicate object id {}", o.id));
            }
            if !o.bbox.is_valid() {
                out.push(format!("object {} box is degenerate", o.id));
            }
            if o.held {
                held += 1;
            }
            if self.blocked_by_static(&o.bbox) {
                out.push(format!("object {} interpenetrates static geometry", o.id));
            }
            if o.movable && !o.held && !self.is_supported(&o.bbox) {
                out.push(format!("object {} is not resting on a surface", o.id));
            }
        }
        if held > 1 {
            out.push(format!("{held} objects are held"));
        }
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                if a.bbox.intersects(&b.bbox) {
                    out.push(format!("objects {} and {} interpenetrate", a.id, b.id));
                }
            }
        }
        out
    }

    /// Bottom face touches the floor or the top of a piece of furniture
    /// whose footprint contains the box's center.
    pub fn is_supported(&self, b: &Aabb) -> bool {
        let bottom = b.max.y;
        if (bottom - self.bounds.max.y).abs() < 1e-9 {
            return true;
        }
        let c = b.center();
        self.furniture.iter().any(|f| {
            (bottom - f.min.y).abs() < 1e-9
                && c.x >= f.min.x
                && c.x <= f.max.x
                && c.z >= f.min.z
                && c.z <= f.max.z
        })
    }

    /// Candidate resting places for `object_id`, in a fixed order: furniture
    /// tops first, then (if enabled) the floor. Returns box centers and how
    /// many of them are on furniture.
    pub fn placement_candidates(&self, object_id: u32) -> (Vec<Point3>, usize) {
        let Some(obj) = self.object(object_id) else {
            return (Vec::new(), 0);
        };
        let size = obj.bbox.size();
        let (hx, hz) = (size.x / 2.0, size.z / 2.0);
        let others: Vec<Aabb> = self
            .objects
            .iter()
            .filter(|o| o.id != object_id)
            .map(|o| o.bbox.inflated(0.02))
            .collect();
        let fits = |b: &Aabb| !self.blocked_by_static(b) && !others.iter().any(|o| o.intersects(b));

        let mut out = Vec::new();
        for f in &self.furniture {
            let support = f.top_height();
            for x in grid_span(f.min.x + hx + 0.02, f.max.x - hx - 0.02, 0.1) {
                for z in grid_span(f.min.z + hz + 0.02, f.max.z - hz - 0.02, 0.1) {
                    let b = Aabb::resting_on(x, z, support, size);
                    if fits(&b) {
                        out.push(b.center());
                    }
                }
            }
        }
        let on_furniture = out.len();
        if self.floor_placements {
            let margin = 0.15;
            for x in grid_span(self.bounds.min.x + margin, self.bounds.max.x - margin, 0.2) {
                for z in grid_span(self.bounds.min.z + margin, self.bounds.max.z - margin, 0.2) {
                    let b = Aabb::resting_on(x, z, 0.0, size);
                    let clear = !self
                        .furniture
                        .iter()
                        .any(|f| f.footprint_distance(x, z) < hx.max(hz) + 0.1);
                    if clear && fits(&b) {
                        out.push(b.center());
                    }
                }
            }
        }
        (out, on_furniture)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&Versioned {
            schema_version: SCHEMA_VERSION,
            inner: self,
        })
        .expect("scene serializes")
    }

    pub fn from_json(s: &str) -> Result<Scene, SceneError> {
        let v: Versioned<Scene> =
            serde_json::from_str(s).map_err(|e| SceneError::Json(e.to_string()))?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(SceneError::Schema(v.schema_version));
        }
        Ok(v.inner)
    }
}

/// Evenly spaced values from `lo` to `hi` inclusive, centered if the range
/// is not a multiple of `step`. Empty when `hi < lo`.
fn grid_span(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step).floor() as usize;
    let offset = (hi - lo - n as f64 * step) / 2.0;
    (0..=n).map(|i| lo + offset + i as f64 * step).collect()
}

fn uniform(rng: &mut SimRng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

fn uniform_count(rng: &mut SimRng, range: [u32; 2]) -> u32 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Horizontal gap between two footprints (0 if they overlap).
fn footprint_gap(a: &Aabb, b: &Aabb) -> f64 {
    let dx = (a.min.x - b.max.x).max(b.min.x - a.max.x).max(0.0);
    let dz = (a.min.z - b.max.z).max(b.min.z - a.max.z).max(0.0);
    dx.hypot(dz)
}

pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<Scene, SceneError> {
    let fail = |reason: String| SceneError::Generation { seed, reason };
    let mut rng = seeding::rng_from(seed);

    let width = uniform(&mut rng, params.room_width);
    let depth = uniform(&mut rng, params.room_depth);
    let bounds = Aabb::new(
        Point3::new(0.0, -params.room_height, 0.0),
        Point3::new(width, 0.0, depth),
    );

    let wanted = uniform_count(&mut rng, params.furniture_count);
    let mut furniture: Vec<Aabb> = Vec::new();
    let mut attempts = 0;
    while (furniture.len() as u32) < wanted {
        attempts += 1;
        if attempts > params.max_attempts {
            return Err(fail(format!(
                "placed {} of {wanted} furniture pieces after {} attempts",
                furniture.len(),
                params.max_attempts
            )));
        }
        let height = uniform(&mut rng, params.furniture_height);
        let candidate = if rng.random_bool(0.6) {
            let length = uniform(&mut rng, params.counter_length);
            let cdepth = uniform(&mut rng, params.counter_depth);
            let wall = rng.random_range(0..4u8);
            let along_x = wall < 2;
            let span = if along_x { width } else { depth };
            if length >= span {
                continue;
            }
            let start = rng.random_range(0.0..(span - length));
            let (x0, x1, z0, z1) = match wall {
                0 => (start, start + length, 0.0, cdepth),
                1 => (start, start + length, depth - cdepth, depth),
                2 => (0.0, cdepth, start, start + length),
                _ => (width - cdepth, width, start, start + length),
            };
            Aabb::new(Point3::new(x0, -height, z0), Point3::new(x1, 0.0, z1))
        } else {
            let sx = uniform(&mut rng, params.island_size);
            let sz = uniform(&mut rng, params.island_size);
            let lo_x = params.aisle;
            let hi_x = width - params.aisle - sx;
            let lo_z = params.aisle;
            let hi_z = depth - params.aisle - sz;
            if hi_x <= lo_x || hi_z <= lo_z {
                continue;
            }
            let x0 = rng.random_range(lo_x..hi_x);
            let z0 = rng.random_range(lo_z..hi_z);
            Aabb::new(
                Point3::new(x0, -height, z0),
                Point3::new(x0 + sx, 0.0, z0 + sz),
            )
        };
        if furniture
            .iter()
            .all(|f| footprint_gap(f, &candidate) >= params.aisle)
        {
            furniture.push(candidate);
        }
    }

    let mut scene = Scene {
        seed,
        bounds,
        furniture,
        objects: Vec::new(),
        body: params.body,
        floor_placements: params.floor_probability > 0.0,
    };

    let n_objects = (uniform_count(&mut rng, params.movable_count) as usize).min(params.categories.len());
    let chosen: Vec<&Category> = params
        .categories
        .choose_multiple(&mut rng, n_objects)
        .collect();
    for (i, category) in chosen.into_iter().enumerate() {
        let size = category.size();
        let mut placed = None;
        for _ in 0..params.max_attempts {
            let on_floor = scene.furniture.is_empty() || rng.random_bool(params.floor_probability);
            let b = if on_floor {
                let m = 0.15;
                let x = rng.random_range(m..(width - m));
                let z = rng.random_range(m..(depth - m));
                if scene
                    .furniture
                    .iter()
                    .any(|f| f.footprint_distance(x, z) < size.x.max(size.z) / 2.0 + 0.1)
                {
                    continue;
                }
                Aabb::resting_on(x, z, 0.0, size)
            } else {
                let f = *scene.furniture.choose(&mut rng).expect("non-empty");
                let (lo_x, hi_x) = (f.min.x + size.x / 2.0 + 0.02, f.max.x - size.x / 2.0 - 0.02);
                let (lo_z, hi_z) = (f.min.z + size.z / 2.0 + 0.02, f.max.z - size.z / 2.0 - 0.02);
                if hi_x <= lo_x || hi_z <= lo_z {
                    continue;
                }
                let x = rng.random_range(lo_x..hi_x);
                let z = rng.random_range(lo_z..hi_z);
                Aabb::resting_on(x, z, f.top_height(), size)
            };
            let clear = scene
                .objects
                .iter()
                .all(|o| !o.bbox.inflated(0.02).intersects(&b));
            if clear && !scene.blocked_by_static(&b) {
                placed = Some(b);
                break;
            }
        }
        let bbox = placed.ok_or_else(|| {
            fail(format!(
                "could not place {} after {} attempts",
                category.name, params.max_attempts
            ))
        })?;
        scene.objects.push(SceneObject {
            id: i as u32,
            category: category.id,
            bbox,
            movable: true,
            held: false,
        });
    }
    Ok(scene)
}

/// Collision-free body positions on a square grid anchored at the room's
/// minimum corner.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachableGrid {
    pub origin_x: f64,
    pub origin_z: f64,
    pub step: f64,
    pub cells: BTreeSet<(i32, i32)>,
}

/// Number of yaw bins per grid position.
pub const YAW_BINS: u32 = 8;

impl ReachableGrid {
    pub fn position(&self, cell: (i32, i32)) -> (f64, f64) {
        (
            self.origin_x + cell.0 as f64 * self.step,
            self.origin_z + cell.1 as f64 * self.step,
        )
    }

    pub fn cell_of(&self, x: f64, z: f64) -> (i32, i32) {
        (
            ((x - self.origin_x) / self.step).round() as i32,
            ((z - self.origin_z) / self.step).round() as i32,
        )
    }

    pub fn contains(&self, cell: (i32, i32)) -> bool {
        self.cells.contains(&cell)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// 4-connected components, largest first (ties broken by smallest cell).
    pub fn components(&self) -> Vec<BTreeSet<(i32, i32)>> {
        let mut seen = BTreeSet::new();
        let mut comps = Vec::new();
        for &start in &self.cells {
            if seen.contains(&start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen.insert(start);
            while let Some(c) = queue.pop_front() {
                comp.insert(c);
                for n in [(c.0 + 1, c.1), (c.0 - 1, c.1), (c.0, c.1 + 1), (c.0, c.1 - 1)] {
                    if self.cells.contains(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            comps.push(comp);
        }
        comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
        comps
    }
}

pub fn reachable_positions(scene: &Scene, step: f64) -> ReachableGrid {
    assert!(step > 0.0, "grid step must be positive");
    let b = &scene.bounds;
    let nx = ((b.max.x - b.min.x) / step).floor() as i32;
    let nz = ((b.max.z - b.min.z) / step).floor() as i32;
    let mut grid = ReachableGrid {
        origin_x: b.min.x,
        origin_z: b.min.z,
        step,
        cells: BTreeSet::new(),
    };
    for i in 0..=nx {
        for j in 0..=nz {
            let (x, z) = grid.position((i, j));
            if !scene.body_blocked_by_static(x, z) {
                grid.cells.insert((i, j));
            }
        }
    }
    grid
}

/// One object-displacement episode definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub scene_seed: u64,
    pub source_category: CategoryId,
    pub dest_category: CategoryId,
    pub source_placement: usize,
    pub dest_placement: usize,
    pub agent_start: Pose,
}

/// A scene with the task's objects moved into place.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskInstance {
    pub scene: Scene,
    pub source_id: u32,
    pub dest_id: u32,
    pub agent_start: Pose,
}

fn relocate(scene: &mut Scene, id: u32, center: Point3) {
    let obj = scene.object_mut(id).expect("object exists");
    let d = center - obj.bbox.center();
    obj.bbox = obj.bbox.translated(d);
}

impl TaskConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Versioned {
            schema_version: SCHEMA_VERSION,
            inner: self,
        })
        .expect("task config serializes")
    }

    pub fn from_json(s: &str) -> Result<TaskConfig, SceneError> {
        let v: Versioned<TaskConfig> =
            serde_json::from_str(s).map_err(|e| SceneError::Json(e.to_string()))?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(SceneError::Schema(v.schema_version));
        }
        Ok(v.inner)
    }

    /// Builds the scene for this config and applies the placements.
    pub fn instantiate(&self, params: &SceneParams) -> Result<TaskInstance, SceneError> {
        let scene = generate_scene(self.scene_seed, params)?;
        self.instantiate_in(scene)
    }

    pub fn instantiate_in(&self, mut scene: Scene) -> Result<TaskInstance, SceneError> {
        let invalid = |reason: String| SceneError::InvalidTask {
            seed: self.scene_seed,
            reason,
        };
        if self.source_category == self.dest_category {
            return Err(invalid("source_category equals dest_category".into()));
        }
        let source_id = scene
            .object_by_category(self.source_category)
            .ok_or_else(|| invalid(format!("source_category {} not in scene", self.source_category)))?
            .id;
        let dest_id = scene
            .object_by_category(self.dest_category)
            .ok_or_else(|| invalid(format!("dest_category {} not in scene", self.dest_category)))?
            .id;

        let (cands, _) = scene.placement_candidates(source_id);
        let c = *cands.get(self.source_placement).ok_or_else(|| {
            invalid(format!(
                "source_placement {} out of {} candidates",
                self.source_placement,
                cands.len()
            ))
        })?;
        relocate(&mut scene, source_id, c);
        let (cands, _) = scene.placement_candidates(dest_id);
        let c = *cands.get(self.dest_placement).ok_or_else(|| {
            invalid(format!(
                "dest_placement {} out of {} candidates",
                self.dest_placement,
                cands.len()
            ))
        })?;
        relocate(&mut scene, dest_id, c);

        let s = self.agent_start;
        if scene.body_blocked_by_static(s.x, s.z)
            || scene
                .objects
                .iter()
                .any(|o| scene.body.collides_with(s.x, s.z, &o.bbox))
        {
            return Err(invalid(format!(
                "agent_start ({:.3}, {:.3}) collides with the scene",
                s.x, s.z
            )));
        }
        Ok(TaskInstance {
            scene,
            source_id,
            dest_id,
            agent_start: s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedScene {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskDataset {
    pub configs: Vec<TaskConfig>,
    pub skipped: Vec<SkippedScene>,
}

fn pick_placement(rng: &mut SimRng, n: usize, on_furniture: usize, floor_p: f64) -> Option<usize> {
    if n == 0 {
        return None;
    }
    let n_floor = n - on_furniture;
    let use_floor = n_floor > 0 && (on_furniture == 0 || rng.random_bool(floor_p));
    Some(if use_floor {
        on_furniture + rng.random_range(0..n_floor)
    } else {
        rng.random_range(0..on_furniture)
    })
}

/// Samples task configurations for each scene seed. Ordered category pairs
/// are drawn without replacement; scenes that cannot host a task are
/// reported in `skipped` rather than failing the whole dataset.
pub fn generate_task_dataset(
    seeds: Range<u64>,
    params: &SceneParams,
    n_pairs_per_scene: usize,
) -> TaskDataset {
    let mut out = TaskDataset::default();
    for seed in seeds {
        let scene = match generate_scene(seed, params) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{e}");
                out.skipped.push(SkippedScene {
                    seed,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let cats = scene.movable_categories();
        if cats.len() < 2 {
            out.skipped.push(SkippedScene {
                seed,
                reason: format!("only {} movable object(s)", cats.len()),
            });
            continue;
        }
        let mut pairs: Vec<(CategoryId, CategoryId)> = cats
            .iter()
            .flat_map(|&a| cats.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
            .collect();
        let mut rng = seeding::stream(seed, "task-pairs");
        pairs.shuffle(&mut rng);

        let mut made = 0;
        for (src, dst) in pairs {
            if made == n_pairs_per_scene {
                break;
            }
            match sample_task(&scene, src, dst, params, &mut rng) {
                Some(cfg) => {
                    out.configs.push(cfg);
                    made += 1;
                }
                None => out.skipped.push(SkippedScene {
                    seed,
                    reason: format!("no valid placement for pair ({src}, {dst})"),
                }),
            }
        }
    }
    out
}

fn sample_task(
    scene: &Scene,
    src: CategoryId,
    dst: CategoryId,
    params: &SceneParams,
    rng: &mut SimRng,
) -> Option<TaskConfig> {
    let src_id = scene.object_by_category(src)?.id;
    let dst_id = scene.object_by_category(dst)?.id;
    let mut work = scene.clone();
    let (cands, on_f) = work.placement_candidates(src_id);
    let source_placement = pick_placement(rng, cands.len(), on_f, params.floor_probability)?;
    relocate(&mut work, src_id, cands[source_placement]);
    let (cands, on_f) = work.placement_candidates(dst_id);
    let dest_placement = pick_placement(rng, cands.len(), on_f, params.floor_probability)?;
    relocate(&mut work, dst_id, cands[dest_placement]);

    let grid = reachable_positions(&work, 0.2);
    let component = grid.components().into_iter().next()?;
    let free: Vec<(i32, i32)> = component
        .into_iter()
        .filter(|&c| {
            let (x, z) = grid.position(c);
            !work
                .objects
                .iter()
                .any(|o| work.body.collides_with(x, z, &o.bbox))
        })
        .collect();
    let cell = *free.choose(rng)?;
    let (x, z) = grid.position(cell);
    let yaw_bin = rng.random_range(0..YAW_BINS);
    Some(TaskConfig {
        scene_seed: scene.seed,
        source_category: src,
        dest_category: dst,
        source_placement,
        dest_placement,
        agent_start: Pose::new(x, 0.0, z, yaw_bin as f64 * std::f64::consts::FRAC_PI_4),
    })
}
