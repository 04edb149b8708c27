//! The object-displacement environment.
//!
//! The agent body is a cylinder moving in 0.2 m / 45° steps; a magnetic
//! gripper moves in 5 cm steps inside a box-shaped workspace in front of an
//! arm base that slides up and down. Touching the source object with the
//! gripper attaches it. An episode succeeds once the held source is within
//! 20 cm (center to center) of the destination object.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{estimate_step, Blend, EstimatorError, SensorBundle, TargetEstimate, TrackStatus};
use crate::geometry::{Aabb, CameraModel, Point3, Pose};
use crate::odometry::{
    dead_reckon, perturb_motion, ActualMotion, BodyMotion, DeadReckonState, MotionNoiseSpec,
    STEP_LENGTH, TURN_ANGLE,
};
use crate::scene::{Scene, TaskInstance};
use crate::seeding::{self, SimRng};
use crate::sensors::{
    apply_depth_noise, render, DegradationSpec, DepthFrame, DepthNoiseSpec, InstanceFrame, Mask,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("episode already finished ({0:?})")]
    EpisodeFinished(Done),
    #[error("invalid episode setup: {0}")]
    InvalidSetup(String),
    #[error("no episode logs to aggregate")]
    EmptyLogs,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Arm step for base and gripper moves.
pub const ARM_STEP: f64 = 0.05;

/// The arm is mounted on the front of the body, this far ahead of its axis.
pub const ARM_MOUNT_FORWARD: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateRight,
    RotateLeft,
    ArmBaseUp,
    ArmBaseDown,
    #[serde(rename = "Gripper+X")]
    GripperPlusX,
    #[serde(rename = "Gripper-X")]
    GripperMinusX,
    #[serde(rename = "Gripper+Y")]
    GripperPlusY,
    #[serde(rename = "Gripper-Y")]
    GripperMinusY,
    #[serde(rename = "Gripper+Z")]
    GripperPlusZ,
    #[serde(rename = "Gripper-Z")]
    GripperMinusZ,
}

impl Action {
    pub const ALL: [Action; 11] = [
        Action::MoveAhead,
        Action::RotateRight,
        Action::RotateLeft,
        Action::ArmBaseUp,
        Action::ArmBaseDown,
        Action::GripperPlusX,
        Action::GripperMinusX,
        Action::GripperPlusY,
        Action::GripperMinusY,
        Action::GripperPlusZ,
        Action::GripperMinusZ,
    ];

    pub fn body_motion(self) -> Option<BodyMotion> {
        match self {
            Action::MoveAhead => Some(BodyMotion::Translate(STEP_LENGTH)),
            Action::RotateRight => Some(BodyMotion::Rotate(TURN_ANGLE)),
            Action::RotateLeft => Some(BodyMotion::Rotate(-TURN_ANGLE)),
            _ => None,
        }
    }

    /// Unit gripper direction in the agent frame for gripper moves.
    pub fn gripper_direction(self) -> Option<Point3> {
        match self {
            Action::GripperPlusX => Some(Point3::new(1.0, 0.0, 0.0)),
            Action::GripperMinusX => Some(Point3::new(-1.0, 0.0, 0.0)),
            Action::GripperPlusY => Some(Point3::new(0.0, 1.0, 0.0)),
            Action::GripperMinusY => Some(Point3::new(0.0, -1.0, 0.0)),
            Action::GripperPlusZ => Some(Point3::new(0.0, 0.0, 1.0)),
            Action::GripperMinusZ => Some(Point3::new(0.0, 0.0, -1.0)),
            _ => None,
        }
    }

    pub fn gripper_move(axis: usize, positive: bool) -> Action {
        match (axis, positive) {
            (0, true) => Action::GripperPlusX,
            (0, false) => Action::GripperMinusX,
            (1, true) => Action::GripperPlusY,
            (1, false) => Action::GripperMinusY,
            (2, true) => Action::GripperPlusZ,
            (2, false) => Action::GripperMinusZ,
            _ => panic!("axis index {axis} out of range"),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).expect("action serializes");
        f.write_str(s.trim_matches('"'))
    }
}

/// Reachability envelope of the gripper relative to the arm base, and the
/// travel of the base itself (height above the floor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmLimits {
    pub workspace_min: Point3,
    pub workspace_max: Point3,
    pub base_height: [f64; 2],
}

impl Default for ArmLimits {
    fn default() -> Self {
        Self {
            workspace_min: Point3::new(-0.4, -0.5, 0.0),
            workspace_max: Point3::new(0.4, 0.5, 0.7),
            base_height: [0.3, 1.2],
        }
    }
}

impl ArmLimits {
    pub fn clamp_offset(&self, p: Point3) -> Point3 {
        Point3::new(
            p.x.clamp(self.workspace_min.x, self.workspace_max.x),
            p.y.clamp(self.workspace_min.y, self.workspace_max.y),
            p.z.clamp(self.workspace_min.z, self.workspace_max.z),
        )
    }

    pub fn contains_offset(&self, p: Point3) -> bool {
        (self.clamp_offset(p) - p).norm() < 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    /// Height of the arm base above the floor.
    pub base_height: f64,
    /// Gripper position relative to the arm base, in agent axes.
    pub gripper_offset: Point3,
    pub holding: Option<u32>,
}

impl Default for ArmState {
    fn default() -> Self {
        Self {
            base_height: 0.9,
            gripper_offset: Point3::new(0.0, -0.15, 0.0),
            holding: None,
        }
    }
}

impl ArmState {
    /// Gripper point in the agent frame (origin on the floor under the body
    /// center).
    pub fn gripper_point(&self) -> Point3 {
        self.base_point() + self.gripper_offset
    }

    pub fn base_point(&self) -> Point3 {
        Point3::new(0.0, -self.base_height, ARM_MOUNT_FORWARD)
    }
}

/// Environment constants that do not vary across a noise sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSettings {
    pub camera: CameraModel,
    /// Camera height above the floor; the camera looks horizontally.
    pub camera_height: f64,
    pub max_steps: u32,
    pub success_distance: f64,
    pub touch_tolerance: f64,
    pub disturb_threshold: f64,
    pub arm: ArmLimits,
    pub initial_arm: ArmState,
    pub blend: Blend,
    /// Discretization used by the "visit new state" reward.
    pub visit_cell: f64,
    /// Whether the privileged target positions given to the ground-truth
    /// direction baseline drift with dead reckoning (true) or are exact.
    pub gps_uses_dead_reckoning: bool,
}

impl Default for TaskSettings {
    fn default() -> Self {
        Self {
            camera: CameraModel::default(),
            camera_height: 1.0,
            max_steps: 200,
            success_distance: 0.2,
            touch_tolerance: 0.05,
            disturb_threshold: 0.01,
            arm: ArmLimits::default(),
            initial_arm: ArmState::default(),
            blend: Blend::default(),
            visit_cell: 0.2,
            gps_uses_dead_reckoning: true,
        }
    }
}

impl TaskSettings {
    pub fn camera_to_agent(&self) -> Pose {
        Pose::new(0.0, -self.camera_height, 0.0, 0.0)
    }
}

/// Noise sources applied during an episode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub motion: MotionNoiseSpec,
    pub depth: DepthNoiseSpec,
    pub degradation: DegradationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Done {
    Running,
    Success,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    BodyCollision,
    GripperCollision,
    HeldObjectCollision,
    PushBlocked,
    ArmLimit,
}

/// Reward constants.
pub mod reward {
    pub const STEP: f64 = -0.01;
    pub const FAILED_ACTION: f64 = -0.03;
    pub const SUCCESS: f64 = 10.0;
    pub const OBJECT_OBSERVED: f64 = 1.0;
    pub const VISIT_NEW_STATE: f64 = 0.1;
    pub const PICKUP: f64 = 5.0;
}

/// Facts about one transition that the reward depends on.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Transition {
    pub action_failed: bool,
    pub success: bool,
    /// Targets seen for the first time this step (0, 1 or 2).
    pub newly_observed: u32,
    pub new_state: bool,
    pub picked_up: bool,
    /// Gripper to current objective, before and after the action.
    pub distance_before: f64,
    pub distance_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardEntry {
    pub step: f64,
    pub failed_action: f64,
    pub success: f64,
    pub object_observed: f64,
    pub visit_new_state: f64,
    pub pickup: f64,
    pub distance: f64,
    pub total: f64,
}

pub fn compute_reward(t: &Transition) -> RewardEntry {
    let mut e = RewardEntry {
        step: reward::STEP,
        failed_action: if t.action_failed { reward::FAILED_ACTION } else { 0.0 },
        success: if t.success { reward::SUCCESS } else { 0.0 },
        object_observed: reward::OBJECT_OBSERVED * t.newly_observed as f64,
        visit_new_state: if t.new_state { reward::VISIT_NEW_STATE } else { 0.0 },
        pickup: if t.picked_up { reward::PICKUP } else { 0.0 },
        // approaching the objective is rewarded: -(after - before)
        distance: t.distance_before - t.distance_after,
        total: 0.0,
    };
    e.total = e.step + e.failed_action + e.success + e.object_observed + e.visit_new_state + e.pickup + e.distance;
    e
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardLedger {
    pub entries: Vec<RewardEntry>,
    pub total: f64,
}

impl RewardLedger {
    pub fn push(&mut self, e: RewardEntry) {
        self.total += e.total;
        self.entries.push(e);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub action_failed: bool,
    pub failure: Option<Failure>,
    pub picked_up: bool,
    pub newly_observed: [bool; 2],
    pub new_state: bool,
    /// Objects pushed this step, with how far.
    pub displaced: Vec<(u32, f64)>,
    pub disturbed: bool,
    pub success: bool,
    pub timeout: bool,
}

/// Target positions handed to the privileged baseline, agent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedTargets {
    pub source: Point3,
    pub dest: Point3,
}

/// What a policy sees after each step.
#[derive(Debug, Clone)]
pub struct Observation {
    pub step: u32,
    pub depth: DepthFrame,
    pub instances: InstanceFrame,
    /// Segmentation masks for (source, destination) after degradation.
    pub masks: [Mask; 2],
    pub camera: CameraModel,
    pub camera_to_agent: Pose,
    pub estimates: [TargetEstimate; 2],
    pub dead_reckoned: Pose,
    pub ego_motion: Pose,
    pub arm: ArmState,
    pub arm_limits: ArmLimits,
    pub last_action: Option<Action>,
    pub last_action_success: bool,
    pub privileged: PrivilegedTargets,
}

impl Observation {
    pub fn gripper(&self) -> Point3 {
        self.arm.gripper_point()
    }

    pub fn holding(&self) -> bool {
        self.arm.holding.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub status: TrackStatus,
    pub position: Option<Point3>,
    pub observation_count: u32,
    pub steps_since_seen: u32,
    /// Distance to the true relative position, when tracking.
    pub error: Option<f64>,
}

/// One JSON-lines record of the episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    pub action: Action,
    pub events: StepEvents,
    pub reward: RewardEntry,
    pub true_pose: Pose,
    pub dead_reckoned_pose: Pose,
    pub estimates: [EstimateRecord; 2],
    pub visible: [bool; 2],
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub events: StepEvents,
    pub reward: RewardEntry,
    pub record: StepRecord,
}

/// Per-episode aggregates needed for the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub picked_up: bool,
    pub success: bool,
    pub disturbed: bool,
    pub length: u32,
    pub frames: u32,
    pub source_visible_frames: u32,
    pub dest_visible_frames: u32,
    pub terminal_source_error: Option<f64>,
    pub terminal_dest_error: Option<f64>,
    pub total_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub episodes: usize,
    pub pu: f64,
    pub sr: f64,
    pub srwd: f64,
    pub mean_eplen: f64,
    pub source_visibility: f64,
    pub dest_visibility: f64,
    /// Mean terminal destination error over episodes that were tracking it;
    /// NaN when none were.
    pub mean_terminal_est_error: f64,
}

pub fn compute_metrics(logs: &[EpisodeSummary]) -> Result<Metrics, TaskError> {
    if logs.is_empty() {
        return Err(TaskError::EmptyLogs);
    }
    let n = logs.len() as f64;
    let frac = |f: &dyn Fn(&EpisodeSummary) -> bool| logs.iter().filter(|l| f(l)).count() as f64 / n;
    let vis = |count: fn(&EpisodeSummary) -> u32| {
        logs.iter()
            .map(|l| if l.frames == 0 { 0.0 } else { count(l) as f64 / l.frames as f64 })
            .sum::<f64>()
            / n
    };
    let errors: Vec<f64> = logs.iter().filter_map(|l| l.terminal_dest_error).collect();
    Ok(Metrics {
        episodes: logs.len(),
        pu: frac(&|l| l.picked_up),
        sr: frac(&|l| l.success),
        srwd: frac(&|l| l.success && !l.disturbed),
        mean_eplen: logs.iter().map(|l| l.length as f64).sum::<f64>() / n,
        source_visibility: vis(|l| l.source_visible_frames),
        dest_visibility: vis(|l| l.dest_visible_frames),
        mean_terminal_est_error: if errors.is_empty() {
            f64::NAN
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        },
    })
}

struct Streams {
    motion: SimRng,
    depth: SimRng,
    masks: [SimRng; 2],
}

/// Mutable state of one running episode.
pub struct EpisodeState {
    pub scene: Scene,
    pub source_id: u32,
    pub dest_id: u32,
    pub pose: Pose,
    pub start_pose: Pose,
    pub arm: ArmState,
    pub dead_reckon: DeadReckonState,
    pub estimates: [TargetEstimate; 2],
    pub step: u32,
    pub disturbed: bool,
    pub picked_up: bool,
    pub done: Done,
    pub settings: TaskSettings,
    pub noise: NoiseSettings,
    pub rewards: RewardLedger,
    visited: BTreeSet<(i64, i64, i64)>,
    observed: [bool; 2],
    initial_centers: Vec<(u32, Point3)>,
    start_targets: [Point3; 2],
    /// Held object's center relative to the gripper, agent axes.
    grasp_offset: Point3,
    streams: Streams,
    summary: EpisodeSummary,
}

impl EpisodeState {
    /// Sets up an episode and returns the initial observation.
    pub fn new(
        task: &TaskInstance,
        settings: TaskSettings,
        noise: NoiseSettings,
        seed: u64,
    ) -> Result<(EpisodeState, Observation), TaskError> {
        noise.motion.validate().map_err(TaskError::InvalidSetup)?;
        noise.depth.validate().map_err(|e| TaskError::InvalidSetup(e.to_string()))?;
        noise.degradation.validate().map_err(|e| TaskError::InvalidSetup(e.to_string()))?;
        settings.blend.validate()?;
        if settings.camera_height <= 0.0 || settings.camera_height >= -task.scene.bounds.min.y {
            return Err(TaskError::InvalidSetup(format!(
                "camera_height {} outside the room",
                settings.camera_height
            )));
        }
        if task.scene.object(task.source_id).is_none() || task.scene.object(task.dest_id).is_none() {
            return Err(TaskError::InvalidSetup("source or destination missing".into()));
        }
        if task.source_id == task.dest_id {
            return Err(TaskError::InvalidSetup("source and destination are the same object".into()));
        }
        let s = task.agent_start;
        let pose = Pose::new(s.x, 0.0, s.z, s.yaw);
        let stream = seeding::derive_indexed(seed, "degradation", noise.degradation.rng_stream);
        let mut state = EpisodeState {
            scene: task.scene.clone(),
            source_id: task.source_id,
            dest_id: task.dest_id,
            pose,
            start_pose: pose,
            arm: settings.initial_arm,
            dead_reckon: DeadReckonState::default(),
            estimates: [TargetEstimate::new(settings.blend); 2],
            step: 0,
            disturbed: false,
            picked_up: false,
            done: Done::Running,
            rewards: RewardLedger::default(),
            visited: BTreeSet::new(),
            observed: [false; 2],
            initial_centers: task
                .scene
                .objects
                .iter()
                .map(|o| (o.id, o.bbox.center()))
                .collect(),
            start_targets: [Point3::ORIGIN; 2],
            grasp_offset: Point3::ORIGIN,
            streams: Streams {
                motion: seeding::stream(seed, "motion"),
                depth: seeding::stream(seed, "depth"),
                masks: [seeding::stream(stream, "source"), seeding::stream(stream, "dest")],
            },
            summary: EpisodeSummary::default(),
            settings,
            noise,
        };
        if state.body_blocked(pose) || state.gripper_blocked(pose, &state.arm) {
            return Err(TaskError::InvalidSetup(format!(
                "agent_start ({:.3}, {:.3}) is in collision",
                s.x, s.z
            )));
        }
        state.start_targets = [
            pose.inverse().transform_point(state.object_center(state.source_id)),
            pose.inverse().transform_point(state.object_center(state.dest_id)),
        ];
        state.visited.insert(state.visit_key());
        let (obs, visible) = state.perceive(None, true, Pose::IDENTITY)?;
        state.observed = visible;
        Ok((state, obs))
    }

    pub fn object_center(&self, id: u32) -> Point3 {
        self.scene.object(id).expect("object exists").bbox.center()
    }

    pub fn gripper_world(&self) -> Point3 {
        self.pose.transform_point(self.arm.gripper_point())
    }

    pub fn camera_pose(&self) -> Pose {
        self.pose.compose(&self.settings.camera_to_agent())
    }

    /// True position of a target relative to the current body frame.
    pub fn true_relative(&self, id: u32) -> Point3 {
        self.pose.inverse().transform_point(self.object_center(id))
    }

    pub fn summary(&self) -> EpisodeSummary {
        self.summary
    }

    pub fn objective_distance(&self) -> f64 {
        let target = if self.picked_up { self.dest_id } else { self.source_id };
        self.gripper_world().distance(self.object_center(target))
    }

    pub fn check_success(&self) -> bool {
        check_success(
            self.picked_up,
            self.object_center(self.source_id),
            self.object_center(self.dest_id),
            self.settings.success_distance,
        )
    }

    fn visit_key(&self) -> (i64, i64, i64) {
        let c = self.settings.visit_cell;
        let b = &self.scene.bounds;
        let bin = (self.pose.yaw / TURN_ANGLE).round() as i64;
        (
            ((self.pose.x - b.min.x) / c).round() as i64,
            ((self.pose.z - b.min.z) / c).round() as i64,
            bin.rem_euclid(8),
        )
    }

    fn body_blocked(&self, pose: Pose) -> bool {
        self.scene.body_blocked_by_static(pose.x, pose.z)
    }

    fn gripper_blocked(&self, pose: Pose, arm: &ArmState) -> bool {
        self.scene
            .point_blocked_by_static(pose.transform_point(arm.gripper_point()))
    }

    fn held_box(&self, pose: Pose, arm: &ArmState) -> Option<Aabb> {
        let id = arm.holding?;
        let obj = self.scene.object(id)?;
        let center = pose.transform_point(arm.gripper_point() + self.grasp_offset);
        Some(Aabb::from_center(center, obj.bbox.size()))
    }

    fn held_blocked(&self, pose: Pose, arm: &ArmState) -> bool {
        let Some(b) = self.held_box(pose, arm) else {
            return false;
        };
        self.scene.blocked_by_static(&b)
            || self
                .scene
                .objects
                .iter()
                .any(|o| Some(o.id) != arm.holding && o.bbox.intersects(&b))
    }

    /// Checks a candidate configuration against static geometry along the
    /// way from the current one.
    fn sweep(&self, to: Pose, arm: &ArmState) -> Result<(), Failure> {
        let from = self.pose;
        let dist = from.translation().distance(to.translation());
        let dyaw = crate::geometry::normalize_yaw(to.yaw - from.yaw);
        let n = ((dist / 0.05).ceil() as usize)
            .max((dyaw.abs() / (TURN_ANGLE / 4.0)).ceil() as usize)
            .max(1);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let p = from.translation().lerp(to.translation(), t);
            let pose = Pose::new(p.x, p.y, p.z, from.yaw + dyaw * t);
            if self.body_blocked(pose) {
                return Err(Failure::BodyCollision);
            }
            if self.gripper_blocked(pose, arm) {
                return Err(Failure::GripperCollision);
            }
            if self.held_blocked(pose, arm) {
                return Err(Failure::HeldObjectCollision);
            }
        }
        Ok(())
    }

    /// Movable objects touched by the body or gripper at the new
    /// configuration are shoved along with the contact point. Returns the
    /// pushes to apply, or a failure if a pushed object would be blocked.
    fn plan_pushes(&self, to: Pose, arm: &ArmState) -> Result<Vec<(u32, Point3)>, Failure> {
        let body_shift = to.translation() - self.pose.translation();
        let grip_from = self.gripper_world();
        let grip_to = to.transform_point(arm.gripper_point());
        let mut pushes = Vec::new();
        for o in &self.scene.objects {
            if Some(o.id) == arm.holding || !o.movable {
                continue;
            }
            // the source is grasped on contact, never pushed by the gripper
            let gripper_touch = o.id != self.source_id && o.bbox.penetrated_by(grip_to);
            let body_touch = self.scene.body.collides_with(to.x, to.z, &o.bbox);
            if !gripper_touch && !body_touch {
                continue;
            }
            let mut shift = Point3::ORIGIN;
            if body_touch {
                shift = Point3::new(body_shift.x, 0.0, body_shift.z);
                // rotation in place: push out radially
                if shift.norm() < 1e-9 {
                    let c = o.bbox.center();
                    let away = Point3::new(c.x - to.x, 0.0, c.z - to.z);
                    shift = away * (0.05 / away.norm().max(1e-9));
                }
            }
            if gripper_touch {
                let g = grip_to - grip_from;
                shift = Point3::new(
                    if g.x.abs() > shift.x.abs() { g.x } else { shift.x },
                    if g.y.abs() > shift.y.abs() { g.y } else { shift.y },
                    if g.z.abs() > shift.z.abs() { g.z } else { shift.z },
                );
            }
            // pushing never lifts or sinks an object
            shift.y = 0.0;
            if shift.norm() < 1e-12 {
                return Err(Failure::PushBlocked);
            }
            let moved = o.bbox.translated(shift);
            let blocked = self.scene.blocked_by_static(&moved)
                || self
                    .scene
                    .objects
                    .iter()
                    .any(|p| p.id != o.id && p.bbox.intersects(&moved))
                || self.scene.body.collides_with(to.x, to.z, &moved)
                || moved.penetrated_by(grip_to);
            if blocked {
                return Err(Failure::PushBlocked);
            }
            pushes.push((o.id, shift));
        }
        Ok(pushes)
    }

    /// Tries to move to a new body pose and arm configuration.
    fn try_configuration(&mut self, to: Pose, arm: ArmState, events: &mut StepEvents) -> Result<(), Failure> {
        self.sweep(to, &arm)?;
        let pushes = self.plan_pushes(to, &arm)?;
        self.pose = to;
        self.arm = arm;
        for (id, shift) in pushes {
            let obj = self.scene.object_mut(id).expect("pushed object exists");
            obj.bbox = obj.bbox.translated(shift);
            events.displaced.push((id, shift.norm()));
        }
        self.sync_held();
        Ok(())
    }

    fn sync_held(&mut self) {
        if let Some(b) = self.held_box(self.pose, &self.arm) {
            let id = self.arm.holding.expect("holding");
            self.scene.object_mut(id).expect("held exists").bbox = b;
        }
    }

    /// Attaches the source if the gripper is touching it.
    pub fn try_pickup(&mut self) -> bool {
        if self.arm.holding.is_some() {
            return false;
        }
        let g = self.gripper_world();
        let src = self.scene.object(self.source_id).expect("source exists");
        if !src.bbox.inflated(self.settings.touch_tolerance).contains(g) {
            return false;
        }
        let offset_world = src.bbox.center() - g;
        self.grasp_offset = self.pose.inverse().rotate(offset_world);
        self.arm.holding = Some(self.source_id);
        self.scene.object_mut(self.source_id).expect("source exists").held = true;
        self.picked_up = true;
        let gripper_agent = self.arm.gripper_point();
        self.estimates[0] = self.estimates[0].attach(gripper_agent);
        true
    }

    fn apply(&mut self, action: Action, events: &mut StepEvents) -> Result<Option<BodyMotion>, Failure> {
        if let Some(cmd) = action.body_motion() {
            let actual: ActualMotion = perturb_motion(cmd, &self.noise.motion, &mut self.streams.motion);
            let to = self.pose.compose(&actual.as_delta());
            let to = Pose::new(to.x, 0.0, to.z, to.yaw);
            self.try_configuration(to, self.arm, events)?;
            return Ok(Some(cmd));
        }
        let mut arm = self.arm;
        match action {
            Action::ArmBaseUp | Action::ArmBaseDown => {
                let sign = if action == Action::ArmBaseUp { 1.0 } else { -1.0 };
                let [lo, hi] = self.settings.arm.base_height;
                arm.base_height = (arm.base_height + sign * ARM_STEP).clamp(lo, hi);
            }
            _ => {
                let dir = action.gripper_direction().expect("gripper action");
                arm.gripper_offset = self.settings.arm.clamp_offset(arm.gripper_offset + dir * ARM_STEP);
            }
        }
        if (arm.gripper_point() - self.arm.gripper_point()).norm() < 1e-12 {
            return Err(Failure::ArmLimit);
        }
        self.try_configuration(self.pose, arm, events)?;
        Ok(None)
    }

    /// Renders, degrades and updates the estimates. Returns the observation
    /// and ground-truth visibility of (source, dest).
    fn perceive(
        &mut self,
        last_action: Option<Action>,
        last_ok: bool,
        ego_motion: Pose,
    ) -> Result<(Observation, [bool; 2]), TaskError> {
        let cam = self.settings.camera;
        let (depth, instances) = render(&self.scene, &self.camera_pose(), &cam);
        let ids = [self.source_id, self.dest_id];
        let visible = ids.map(|id| instances.ids().contains(&id));
        let noisy = apply_depth_noise(&depth, &self.noise.depth, &mut self.streams.depth);
        let [r0, r1] = &mut self.streams.masks;
        let masks = [
            self.noise.degradation.apply(&instances, ids[0], r0),
            self.noise.degradation.apply(&instances, ids[1], r1),
        ];
        let camera_to_agent = self.settings.camera_to_agent();
        for k in 0..2 {
            self.estimates[k] = if self.estimates[k].is_attached() {
                self.estimates[k].follow_gripper(self.arm.gripper_point())
            } else {
                let bundle = SensorBundle {
                    mask: &masks[k],
                    depth: &noisy,
                    cam: &cam,
                    camera_to_agent,
                    ego_motion,
                };
                estimate_step(&self.estimates[k], &bundle)?
            };
        }
        self.summary.frames += 1;
        self.summary.source_visible_frames += visible[0] as u32;
        self.summary.dest_visible_frames += visible[1] as u32;
        self.summary.terminal_source_error = self.estimate_error(0);
        self.summary.terminal_dest_error = self.estimate_error(1);

        let obs = Observation {
            step: self.step,
            depth: noisy,
            instances,
            masks,
            camera: cam,
            camera_to_agent,
            estimates: self.estimates,
            dead_reckoned: self.dead_reckon.pose_estimate,
            ego_motion,
            arm: self.arm,
            arm_limits: self.settings.arm,
            last_action,
            last_action_success: last_ok,
            privileged: self.privileged_targets(),
        };
        Ok((obs, visible))
    }

    fn privileged_targets(&self) -> PrivilegedTargets {
        let source = if self.arm.holding.is_some() {
            self.arm.gripper_point() + self.grasp_offset
        } else if self.settings.gps_uses_dead_reckoning {
            self.dead_reckon.pose_estimate.inverse().transform_point(self.start_targets[0])
        } else {
            self.true_relative(self.source_id)
        };
        let dest = if self.settings.gps_uses_dead_reckoning {
            self.dead_reckon.pose_estimate.inverse().transform_point(self.start_targets[1])
        } else {
            self.true_relative(self.dest_id)
        };
        PrivilegedTargets { source, dest }
    }

    fn estimate_error(&self, k: usize) -> Option<f64> {
        let id = if k == 0 { self.source_id } else { self.dest_id };
        self.estimates[k]
            .position()
            .map(|p| p.distance(self.true_relative(id)))
    }

    fn estimate_record(&self, k: usize) -> EstimateRecord {
        let e = &self.estimates[k];
        EstimateRecord {
            status: e.status(),
            position: e.position(),
            observation_count: e.observation_count,
            steps_since_seen: e.steps_since_seen,
            error: self.estimate_error(k),
        }
    }

    /// Executes one action.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome, TaskError> {
        if self.done != Done::Running {
            return Err(TaskError::EpisodeFinished(self.done));
        }
        let mut events = StepEvents::default();
        let distance_before = self.objective_distance();
        let dr_before = self.dead_reckon.pose_estimate;

        match self.apply(action, &mut events) {
            Ok(Some(cmd)) => self.dead_reckon = dead_reckon(&self.dead_reckon, cmd),
            Ok(None) => {}
            Err(f) => {
                events.action_failed = true;
                events.failure = Some(f);
            }
        }
        let was_picked = self.picked_up;
        if !events.action_failed {
            events.picked_up = self.try_pickup();
        }
        self.step += 1;

        for &(id, _) in &events.displaced {
            if id == self.source_id || id == self.dest_id {
                continue;
            }
            let start = self
                .initial_centers
                .iter()
                .find(|(i, _)| *i == id)
                .map(|(_, c)| *c)
                .expect("initial center recorded");
            if self.object_center(id).distance(start) > self.settings.disturb_threshold {
                self.disturbed = true;
            }
        }
        events.disturbed = self.disturbed;

        // the objective before the action defines the shaping term
        let distance_after = if was_picked || !events.picked_up {
            self.objective_distance()
        } else {
            self.gripper_world().distance(self.object_center(self.source_id))
        };

        let key = self.visit_key();
        events.new_state = self.visited.insert(key);

        let ego = dr_before.delta_to(&self.dead_reckon.pose_estimate);
        let (observation, visible) = self.perceive(Some(action), !events.action_failed, ego)?;
        for k in 0..2 {
            if visible[k] && !self.observed[k] {
                self.observed[k] = true;
                events.newly_observed[k] = true;
            }
        }

        if self.check_success() {
            self.done = Done::Success;
            events.success = true;
        } else if self.step >= self.settings.max_steps {
            self.done = Done::Timeout;
            events.timeout = true;
        }

        let reward = compute_reward(&Transition {
            action_failed: events.action_failed,
            success: events.success,
            newly_observed: events.newly_observed.iter().filter(|&&b| b).count() as u32,
            new_state: events.new_state,
            picked_up: events.picked_up,
            distance_before,
            distance_after,
        });
        self.rewards.push(reward);

        self.summary.picked_up = self.picked_up;
        self.summary.success = self.done == Done::Success;
        self.summary.disturbed = self.disturbed;
        self.summary.length = self.step;
        self.summary.total_reward = self.rewards.total;

        let record = StepRecord {
            step: self.step,
            action,
            events: events.clone(),
            reward,
            true_pose: self.pose,
            dead_reckoned_pose: self.dead_reckon.pose_estimate,
            estimates: [self.estimate_record(0), self.estimate_record(1)],
            visible,
        };
        Ok(StepOutcome {
            observation,
            events,
            reward,
            record,
        })
    }

    /// Static-geometry penetrations of the body, gripper or held object in
    /// the current configuration. Always empty for a consistent state.
    pub fn penetrations(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.body_blocked(self.pose) {
            out.push("body");
        }
        if self.gripper_blocked(self.pose, &self.arm) {
            out.push("gripper");
        }
        if let Some(b) = self.held_box(self.pose, &self.arm) {
            if self.scene.blocked_by_static(&b) {
                out.push("held object");
            }
        }
        out
    }
}

pub fn check_success(picked_up: bool, source_center: Point3, dest_center: Point3, threshold: f64) -> bool {
    picked_up && source_center.distance(dest_center) < threshold
}
