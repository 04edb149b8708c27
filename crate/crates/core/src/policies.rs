//! Scripted controllers.
//!
//! All three policies share one controller and differ only in where their
//! target positions come from: the temporally aggregated estimates, the
//! privileged start-of-episode positions carried by dead reckoning, or the
//! current frame's mask alone.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::f64::consts::FRAC_PI_8;

use serde::{Deserialize, Serialize};

use crate::geometry::{backproject_masked_centroid, Point3, Pose};
use crate::odometry::{STEP_LENGTH, TURN_ANGLE};
use crate::task::{Action, Observation, PrivilegedTargets, ARM_MOUNT_FORWARD, ARM_STEP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Estimator,
    GtDirection,
    MaskOnly,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Estimator, PolicyKind::GtDirection, PolicyKind::MaskOnly];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Estimator => "estimator",
            PolicyKind::GtDirection => "gt_direction",
            PolicyKind::MaskOnly => "mask_only",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy '{s}' (expected estimator, gt_direction or mask_only)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    SearchSource,
    GotoSource,
    Grasp,
    SearchDest,
    GotoDest,
    Place,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Steps without a sighting after which a goto falls back to search.
    pub staleness: u32,
    /// Moves per frontier run between scans.
    pub frontier_run: u32,
    /// Horizontal alignment tolerance before the gripper descends.
    pub grasp_tolerance: f64,
    /// How far above the target the gripper must be before moving sideways.
    pub clearance: f64,
    /// Aim point for the held object above the destination.
    pub place_height: f64,
    /// Forward reach (from the arm mount) at which a goto stops.
    pub stop_reach: f64,
    /// Lowest gripper height while travelling empty-handed / holding.
    pub travel_height: f64,
    pub carry_height: f64,
    /// Replace greedy-with-sidestep navigation by A* over a learned grid.
    pub use_planner: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            staleness: 50,
            frontier_run: 5,
            grasp_tolerance: 0.025 + 1e-9,
            clearance: 0.1,
            place_height: 0.12,
            stop_reach: 0.5,
            travel_height: 1.0,
            carry_height: 1.2,
            use_planner: false,
        }
    }
}

const GRID: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyState {
    pub phase: Option<Phase>,
    /// Rotations left in the current scan.
    pub scan_budget: u32,
    /// Cells visited, on a grid in the dead-reckoned frame.
    pub visited: BTreeSet<(i32, i32)>,
    /// Cells found blocked by failed moves or depth.
    pub blocked: BTreeSet<(i32, i32)>,
    pending: VecDeque<Action>,
    scan_free: Vec<f64>,
    run_left: u32,
    sidestep_left: bool,
    move_failures: u32,
}

impl PolicyState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Target positions a controller works from, agent frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Beliefs {
    pub source: Option<Point3>,
    pub dest: Option<Point3>,
    /// Steps since each belief was last refreshed by a sighting.
    pub source_age: u32,
    pub dest_age: u32,
}

/// Agent-frame centroid of the current mask, if any.
pub fn current_centroid(obs: &Observation, k: usize) -> Option<Point3> {
    backproject_masked_centroid(&obs.depth, &obs.masks[k], &obs.camera)
        .ok()
        .flatten()
        .map(|c| obs.camera_to_agent.transform_point(c))
}

/// Where a mask-only controller assumes a held object hangs.
fn held_guess(obs: &Observation) -> Point3 {
    obs.gripper() + Point3::new(0.0, 0.05, 0.0)
}

pub fn estimator_beliefs(obs: &Observation) -> Beliefs {
    let [s, d] = &obs.estimates;
    Beliefs {
        source: s.position(),
        dest: d.position(),
        source_age: s.steps_since_seen,
        dest_age: d.steps_since_seen,
    }
}

pub fn gt_beliefs(targets: &PrivilegedTargets) -> Beliefs {
    Beliefs {
        source: Some(targets.source),
        dest: Some(targets.dest),
        source_age: 0,
        dest_age: 0,
    }
}

pub fn mask_only_beliefs(obs: &Observation) -> Beliefs {
    Beliefs {
        source: if obs.holding() {
            Some(held_guess(obs))
        } else {
            current_centroid(obs, 0)
        },
        dest: current_centroid(obs, 1),
        source_age: 0,
        dest_age: 0,
    }
}

pub fn estimator_policy(obs: &Observation, state: &mut PolicyState, cfg: &PolicyConfig) -> Action {
    decide(obs, &estimator_beliefs(obs), state, cfg)
}

pub fn gt_direction_policy(
    obs: &Observation,
    targets: &PrivilegedTargets,
    state: &mut PolicyState,
    cfg: &PolicyConfig,
) -> Action {
    decide(obs, &gt_beliefs(targets), state, cfg)
}

pub fn mask_only_policy(obs: &Observation, state: &mut PolicyState, cfg: &PolicyConfig) -> Action {
    decide(obs, &mask_only_beliefs(obs), state, cfg)
}

pub fn act(kind: PolicyKind, obs: &Observation, state: &mut PolicyState, cfg: &PolicyConfig) -> Action {
    match kind {
        PolicyKind::Estimator => estimator_policy(obs, state, cfg),
        PolicyKind::GtDirection => gt_direction_policy(obs, &obs.privileged, state, cfg),
        PolicyKind::MaskOnly => mask_only_policy(obs, state, cfg),
    }
}

fn cell_of(x: f64, z: f64) -> (i32, i32) {
    ((x / GRID).round() as i32, (z / GRID).round() as i32)
}

/// Forward reach needed from the arm mount, and lateral offset.
fn reach(t: Point3) -> (f64, f64) {
    (t.z - ARM_MOUNT_FORWARD, t.x)
}

fn within_envelope(t: Point3, obs: &Observation) -> bool {
    let (fwd, lat) = reach(t);
    let lim = &obs.arm_limits;
    fwd >= lim.workspace_min.z && fwd <= lim.workspace_max.z - 0.05 && lat.abs() <= lim.workspace_max.x - 0.05
}

/// Distance to the nearest obstacle ahead of the body, from the depth frame.
pub fn free_ahead(obs: &Observation) -> f64 {
    let cam = &obs.camera;
    let depth = &obs.depth;
    let (w, h) = depth.resolution();
    let mut nearest = depth.max_range();
    // columns spanning roughly the body width at 1 m
    let half = (0.25 * cam.fx).ceil() as i64;
    let u0 = (cam.cx as i64 - half).max(0) as u32;
    let u1 = ((cam.cx as i64 + half) as u32).min(w - 1);
    let v0 = cam.cy.ceil() as u32;
    for v in (v0..h).step_by(2) {
        for u in (u0..=u1).step_by(2) {
            let d = depth.get(u, v);
            if !depth.is_valid(d) {
                continue;
            }
            let p = obs.camera_to_agent.transform_point(Point3::new(
                (u as f64 - cam.cx) * d / cam.fx,
                (v as f64 - cam.cy) * d / cam.fy,
                d,
            ));
            // points above the floor and in the body's path
            if p.y < -0.03 && p.x.abs() < 0.25 && p.z < nearest {
                nearest = p.z;
            }
        }
    }
    nearest
}

fn turn_toward(bearing: f64) -> Action {
    if bearing > 0.0 {
        Action::RotateRight
    } else {
        Action::RotateLeft
    }
}

fn last_failed(obs: &Observation, action: Action) -> bool {
    obs.last_action == Some(action) && !obs.last_action_success
}

/// Arm adjustment needed before driving, if any.
fn travel_pose(obs: &Observation, cfg: &PolicyConfig) -> Option<Action> {
    let arm = &obs.arm;
    let lim = &obs.arm_limits;
    let need = if obs.holding() { cfg.carry_height } else { cfg.travel_height };
    let height = -obs.gripper().y;
    if height < need - 1e-9 {
        if arm.gripper_offset.y - ARM_STEP >= lim.workspace_min.y - 1e-9 && !last_failed(obs, Action::GripperMinusY) {
            return Some(Action::GripperMinusY);
        }
        if arm.base_height + ARM_STEP <= lim.base_height[1] + 1e-9 && !last_failed(obs, Action::ArmBaseUp) {
            return Some(Action::ArmBaseUp);
        }
    }
    let max_z = if obs.holding() { 0.05 } else { 0.0 };
    if arm.gripper_offset.z > max_z + 1e-9 && !last_failed(obs, Action::GripperMinusZ) {
        return Some(Action::GripperMinusZ);
    }
    if arm.gripper_offset.x.abs() > 0.05 + 1e-9 {
        let a = Action::gripper_move(0, arm.gripper_offset.x < 0.0);
        if !last_failed(obs, a) {
            return Some(a);
        }
    }
    None
}

/// The shared controller.
pub fn decide(obs: &Observation, beliefs: &Beliefs, st: &mut PolicyState, cfg: &PolicyConfig) -> Action {
    let dr = obs.dead_reckoned;
    st.visited.insert(cell_of(dr.x, dr.z));
    if obs.last_action == Some(Action::MoveAhead) {
        if obs.last_action_success {
            st.move_failures = 0;
        } else {
            st.move_failures += 1;
        }
    }
    if last_failed(obs, Action::MoveAhead) {
        let ahead = dr.transform_point(Point3::new(0.0, 0.0, STEP_LENGTH));
        st.blocked.insert(cell_of(ahead.x, ahead.z));
    }

    let holding = obs.holding();
    let (target, age) = if holding {
        (beliefs.dest, beliefs.dest_age)
    } else {
        (beliefs.source, beliefs.source_age)
    };
    let phase_before = st.phase;
    let usable = target.filter(|t| age <= cfg.staleness || within_envelope(*t, obs));
    let in_manip = matches!(phase_before, Some(Phase::Grasp | Phase::Place));
    let close_enough = |t: Point3| {
        within_envelope(t, obs)
            && (in_manip || reach(t).0 <= cfg.stop_reach || last_failed(obs, Action::MoveAhead))
    };
    let phase = match (holding, usable) {
        (false, None) => Phase::SearchSource,
        (true, None) => Phase::SearchDest,
        (false, Some(t)) if close_enough(t) => Phase::Grasp,
        (false, Some(_)) => Phase::GotoSource,
        (true, Some(t)) if close_enough(t) => Phase::Place,
        (true, Some(_)) => Phase::GotoDest,
    };
    if phase_before != Some(phase) {
        // queued scan/sidestep moves belong to the previous phase
        st.pending.clear();
        st.run_left = 0;
        if matches!(phase, Phase::SearchSource | Phase::SearchDest) {
            st.scan_budget = 8;
            st.scan_free.clear();
        }
    }
    st.phase = Some(phase);

    match phase {
        Phase::SearchSource | Phase::SearchDest => travel_pose(obs, cfg).unwrap_or_else(|| search(obs, st, cfg)),
        Phase::GotoSource | Phase::GotoDest => {
            travel_pose(obs, cfg).unwrap_or_else(|| goto(obs, usable.expect("goto has a target"), st, cfg))
        }
        Phase::Grasp => grasp(obs, usable.expect("grasp has a target"), cfg),
        Phase::Place => {
            let held = if holding {
                beliefs.source.unwrap_or_else(|| held_guess(obs))
            } else {
                held_guess(obs)
            };
            place(obs, held, usable.expect("place has a target"), cfg)
        }
    }
}

fn search(obs: &Observation, st: &mut PolicyState, cfg: &PolicyConfig) -> Action {
    if let Some(a) = st.pending.pop_front() {
        return a;
    }
    if st.run_left > 0 && !last_failed(obs, Action::MoveAhead) && free_ahead(obs) > STEP_LENGTH + 0.25 {
        st.run_left -= 1;
        return Action::MoveAhead;
    }
    if st.run_left > 0 || last_failed(obs, Action::MoveAhead) {
        st.run_left = 0;
        st.scan_budget = 8;
        st.scan_free.clear();
    }
    if st.scan_budget > 0 {
        st.scan_free.push(free_ahead(obs));
        st.scan_budget -= 1;
        return Action::RotateRight;
    }
    // scan complete: back at the starting heading; pick a frontier direction
    let dr = obs.dead_reckoned;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &free) in st.scan_free.iter().enumerate() {
        let yaw = dr.yaw + k as f64 * TURN_ANGLE;
        let heading = Pose::new(dr.x, 0.0, dr.z, yaw);
        let mut score = free.min(3.0);
        for (dist, weight) in [(0.6, 1.0), (1.2, 0.6), (1.8, 0.3)] {
            let p = heading.transform_point(Point3::new(0.0, 0.0, dist));
            let c = cell_of(p.x, p.z);
            if st.visited.contains(&c) {
                score -= weight;
            }
            if st.blocked.contains(&c) {
                score -= 2.0 * weight;
            }
        }
        if score > best.0 {
            best = (score, k);
        }
    }
    let k = best.1;
    let free = st.scan_free.get(k).copied().unwrap_or(0.0);
    st.scan_free.clear();
    st.scan_budget = 8;
    let turns: Vec<Action> = if k <= 4 {
        vec![Action::RotateRight; k]
    } else {
        vec![Action::RotateLeft; 8 - k]
    };
    st.pending.extend(turns);
    let steps = (((free - 0.45) / STEP_LENGTH).floor().max(1.0) as u32).min(cfg.frontier_run);
    st.run_left = steps;
    st.pending.pop_front().unwrap_or_else(|| {
        st.run_left -= 1;
        Action::MoveAhead
    })
}

fn goto(obs: &Observation, target: Point3, st: &mut PolicyState, cfg: &PolicyConfig) -> Action {
    if let Some(a) = st.pending.pop_front() {
        return a;
    }
    let waypoint = if cfg.use_planner {
        plan_waypoint(obs, target, st).unwrap_or(target)
    } else {
        target
    };
    if last_failed(obs, Action::MoveAhead) && !cfg.use_planner {
        return sidestep(st);
    }
    let bearing = waypoint.bearing();
    // one turn is 45 degrees, so anything within half a turn is straight ahead
    if bearing.abs() > FRAC_PI_8 + 0.02 {
        return turn_toward(bearing);
    }
    Action::MoveAhead
}

/// A blocked forward move: turn 90 degrees, step, turn back.
fn sidestep(st: &mut PolicyState) -> Action {
    if st.move_failures >= 5 {
        // boxed in: turn around and back out
        st.move_failures = 0;
        st.pending.extend([Action::RotateRight, Action::RotateRight, Action::RotateRight, Action::MoveAhead, Action::MoveAhead]);
        return Action::RotateRight;
    }
    if st.move_failures >= 2 {
        st.sidestep_left = !st.sidestep_left;
    }
    let (out, back) = if st.sidestep_left {
        (Action::RotateLeft, Action::RotateRight)
    } else {
        (Action::RotateRight, Action::RotateLeft)
    };
    st.pending.extend([out, Action::MoveAhead, Action::MoveAhead, back, back]);
    out
}

/// Next point on an A* path over the learned grid, agent frame.
fn plan_waypoint(obs: &Observation, target: Point3, st: &mut PolicyState) -> Option<Point3> {
    let dr = obs.dead_reckoned;
    // mark obstacles seen ahead
    let free = free_ahead(obs);
    if free < 1.5 {
        let p = dr.transform_point(Point3::new(0.0, 0.0, free + 0.1));
        st.blocked.insert(cell_of(p.x, p.z));
    }
    let goal_world = dr.transform_point(target);
    let start = cell_of(dr.x, dr.z);
    let goal = cell_of(goal_world.x, goal_world.z);
    let path = astar(start, goal, &st.blocked, 400)?;
    let next = *path.get(1)?;
    let (wx, wz) = (next.0 as f64 * GRID, next.1 as f64 * GRID);
    Some(dr.inverse().transform_point(Point3::new(wx, 0.0, wz)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    cell: (i32, i32),
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// 8-connected A* over an unbounded grid; the goal may be blocked (targets
/// sit on furniture), in which case a neighbor of it ends the search.
pub fn astar(
    start: (i32, i32),
    goal: (i32, i32),
    blocked: &BTreeSet<(i32, i32)>,
    max_expansions: usize,
) -> Option<Vec<(i32, i32)>> {
    let h = |c: (i32, i32)| {
        let dx = (c.0 - goal.0).abs() as f64;
        let dz = (c.1 - goal.1).abs() as f64;
        dx.max(dz) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dz)
    };
    let mut open = BinaryHeap::from([Node { f: h(start), cell: start }]);
    let mut g: BTreeMap<(i32, i32), f64> = BTreeMap::from([(start, 0.0)]);
    let mut came: BTreeMap<(i32, i32), (i32, i32)> = BTreeMap::new();
    let mut expansions = 0;
    while let Some(Node { cell, .. }) = open.pop() {
        let near_goal = (cell.0 - goal.0).abs() <= 1 && (cell.1 - goal.1).abs() <= 1;
        if cell == goal || (near_goal && blocked.contains(&goal)) {
            let mut path = vec![cell];
            let mut c = cell;
            while let Some(&p) = came.get(&c) {
                path.push(p);
                c = p;
            }
            path.reverse();
            return Some(path);
        }
        expansions += 1;
        if expansions > max_expansions {
            return None;
        }
        let gc = g[&cell];
        for (dx, dz) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let n = (cell.0 + dx, cell.1 + dz);
            if blocked.contains(&n) {
                continue;
            }
            let step = if dx != 0 && dz != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let cand = gc + step;
            if g.get(&n).is_none_or(|&old| cand < old - 1e-12) {
                g.insert(n, cand);
                came.insert(n, cell);
                open.push(Node { f: cand + h(n), cell: n });
            }
        }
    }
    None
}

/// Escape for a gripper move the workspace cannot take.
fn clamped(obs: &Observation, a: Action) -> bool {
    let lim = &obs.arm_limits;
    let Some(dir) = a.gripper_direction() else {
        return match a {
            Action::ArmBaseUp => obs.arm.base_height + ARM_STEP > lim.base_height[1] + 1e-9,
            Action::ArmBaseDown => obs.arm.base_height - ARM_STEP < lim.base_height[0] - 1e-9,
            _ => false,
        };
    };
    !lim.contains_offset(obs.arm.gripper_offset + dir * ARM_STEP)
}

/// Vertical gripper move, falling back to the arm base at the workspace limit.
fn vertical(obs: &Observation, down: bool) -> Action {
    let (grip, base) = if down {
        (Action::GripperPlusY, Action::ArmBaseDown)
    } else {
        (Action::GripperMinusY, Action::ArmBaseUp)
    };
    if clamped(obs, grip) {
        base
    } else {
        grip
    }
}

/// Horizontal servo step along the larger of the x and z offsets.
fn horizontal(obs: &Observation, d: Point3) -> Action {
    let axis = if d.x.abs() >= d.z.abs() { 0 } else { 2 };
    let a = Action::gripper_move(axis, d.component(axis) > 0.0);
    if clamped(obs, a) {
        // out of arm reach: let the body help
        return if axis == 2 && d.z > 0.0 {
            Action::MoveAhead
        } else {
            turn_toward(d.x)
        };
    }
    a
}

/// Gripper servo onto the source, approaching from above.
pub fn grasp(obs: &Observation, target: Point3, cfg: &PolicyConfig) -> Action {
    let g = obs.gripper();
    let d = target - g;
    let h = d.x.hypot(d.z);
    let above = g.y <= target.y - cfg.clearance;
    if h > 0.08 && !above {
        return vertical(obs, false);
    }
    if d.x.abs().max(d.z.abs()) > cfg.grasp_tolerance {
        return horizontal(obs, d);
    }
    if last_failed(obs, Action::GripperPlusY) || last_failed(obs, Action::ArmBaseDown) {
        // resting on a surface next to the target: nudge toward it
        if h > 0.005 {
            let axis = if d.x.abs() >= d.z.abs() { 0 } else { 2 };
            return Action::gripper_move(axis, d.component(axis) > 0.0);
        }
        return Action::GripperPlusZ;
    }
    vertical(obs, true)
}

/// Servo the held object to a point above the destination.
pub fn place(obs: &Observation, held: Point3, dest: Point3, cfg: &PolicyConfig) -> Action {
    let aim = dest + Point3::new(0.0, -cfg.place_height, 0.0);
    let d = aim - held;
    let h = d.x.hypot(d.z);
    let above = held.y <= dest.y - cfg.clearance;
    if h > 0.08 && !above {
        return vertical(obs, false);
    }
    if d.x.abs().max(d.z.abs()) > cfg.grasp_tolerance && (h >= d.y.abs() || d.y < 0.0) {
        return horizontal(obs, d);
    }
    if d.y.abs() > cfg.grasp_tolerance {
        return vertical(obs, d.y > 0.0);
    }
    horizontal(obs, d)
}
