//! Relative 3D target localization from masked depth.
//!
//! Each target keeps a single position in the agent's current body frame.
//! Between observations the position is carried along by the inverse of the
//! dead-reckoned ego-motion; whenever the target is segmented again the
//! fresh backprojected centroid is blended in, which re-anchors any drift
//! accumulated while it was out of sight.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{backproject_masked_centroid, CameraModel, GeometryError, Point3, Pose};
use crate::sensors::{DepthFrame, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid blend weight {0}; expected (0, 1]")]
    InvalidAlpha(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Unobserved,
    Tracking,
}

/// How a fresh measurement is merged with the running estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Blend {
    /// `position <- (1 - alpha) * position + alpha * fresh`
    Ema { alpha: f64 },
    /// Equal weight for every observation so far (`alpha = 1 / n`).
    RunningMean,
}

impl Default for Blend {
    fn default() -> Self {
        Blend::Ema { alpha: 0.5 }
    }
}

impl Blend {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        match *self {
            Blend::Ema { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(EstimatorError::InvalidAlpha(alpha))
            }
            _ => Ok(()),
        }
    }

    fn weight(&self, observation_count: u32) -> f64 {
        match *self {
            Blend::Ema { alpha } => alpha,
            Blend::RunningMean => 1.0 / observation_count as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnostic {
    PropagatedUnobserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    position: Option<Point3>,
    pub observation_count: u32,
    pub steps_since_seen: u32,
    pub blend: Blend,
    /// Offset from the gripper once the target is held.
    grasp_offset: Option<Point3>,
}

impl Default for TargetEstimate {
    fn default() -> Self {
        Self::new(Blend::default())
    }
}

impl TargetEstimate {
    pub fn new(blend: Blend) -> Self {
        Self {
            position: None,
            observation_count: 0,
            steps_since_seen: 0,
            blend,
            grasp_offset: None,
        }
    }

    pub fn status(&self) -> TrackStatus {
        if self.position.is_some() {
            TrackStatus::Tracking
        } else {
            TrackStatus::Unobserved
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.position.is_some()
    }

    pub fn position(&self) -> Option<Point3> {
        self.position
    }

    pub fn is_attached(&self) -> bool {
        self.grasp_offset.is_some()
    }

    /// Re-expresses the estimate after the agent moved by `ego_motion`
    /// (the new body pose in the old body frame).
    pub fn propagate(&self, ego_motion: &Pose) -> (TargetEstimate, Option<Diagnostic>) {
        let Some(p) = self.position else {
            return (*self, Some(Diagnostic::PropagatedUnobserved));
        };
        let mut next = *self;
        next.position = Some(ego_motion.inverse().transform_point(p));
        next.steps_since_seen += 1;
        (next, None)
    }

    /// Folds in a measurement from `mask` over `depth`. An empty mask (or one
    /// with no valid depth) leaves the position alone and counts a missed tick.
    pub fn observe(
        &self,
        mask: &Mask,
        depth: &DepthFrame,
        cam: &CameraModel,
        camera_to_agent: &Pose,
    ) -> Result<TargetEstimate, EstimatorError> {
        self.observe_inner(mask, depth, cam, camera_to_agent, true)
    }

    fn observe_inner(
        &self,
        mask: &Mask,
        depth: &DepthFrame,
        cam: &CameraModel,
        camera_to_agent: &Pose,
        count_miss: bool,
    ) -> Result<TargetEstimate, EstimatorError> {
        let fresh = backproject_masked_centroid(depth, mask, cam)?
            .map(|c| camera_to_agent.transform_point(c));
        Ok(match fresh {
            Some(m) => self.fuse(m),
            None => {
                let mut next = *self;
                if count_miss {
                    next.steps_since_seen += 1;
                }
                next
            }
        })
    }

    /// Merges an agent-frame measurement.
    pub fn fuse(&self, measurement: Point3) -> TargetEstimate {
        let mut next = *self;
        next.observation_count += 1;
        next.steps_since_seen = 0;
        next.position = Some(match self.position {
            None => measurement,
            Some(prev) => {
                let a = self.blend.weight(next.observation_count);
                prev * (1.0 - a) + measurement * a
            }
        });
        next
    }

    /// Switches to kinematic tracking of a grasped target: from now on the
    /// position follows the gripper at the offset believed at grasp time.
    pub fn attach(&self, gripper: Point3) -> TargetEstimate {
        let mut next = *self;
        let offset = self.position.map_or(Point3::ORIGIN, |p| p - gripper);
        next.grasp_offset = Some(offset);
        next.position = Some(gripper + offset);
        next.steps_since_seen = 0;
        next
    }

    pub fn follow_gripper(&self, gripper: Point3) -> TargetEstimate {
        let mut next = *self;
        if let Some(offset) = self.grasp_offset {
            next.position = Some(gripper + offset);
            next.steps_since_seen = 0;
        }
        next
    }
}

/// Everything the estimator consumes on one tick.
#[derive(Debug, Clone, Copy)]
pub struct SensorBundle<'a> {
    pub mask: &'a Mask,
    pub depth: &'a DepthFrame,
    pub cam: &'a CameraModel,
    pub camera_to_agent: Pose,
    /// Dead-reckoned motion since the previous tick.
    pub ego_motion: Pose,
}

/// One tick: carry the estimate through the ego-motion, then try to observe.
/// The tick is counted once whether or not the target was seen.
pub fn estimate_step(
    est: &TargetEstimate,
    bundle: &SensorBundle<'_>,
) -> Result<TargetEstimate, EstimatorError> {
    if est.is_tracking() {
        let (moved, _) = est.propagate(&bundle.ego_motion);
        moved.observe_inner(bundle.mask, bundle.depth, bundle.cam, &bundle.camera_to_agent, false)
    } else {
        est.observe_inner(bundle.mask, bundle.depth, bundle.cam, &bundle.camera_to_agent, true)
    }
}
