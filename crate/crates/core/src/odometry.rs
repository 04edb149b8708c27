//! Motion noise for body actions and dead reckoning from commanded motion.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;

/// Body step length and turn increment.
pub const STEP_LENGTH: f64 = 0.2;
pub const TURN_ANGLE: f64 = std::f64::consts::FRAC_PI_4;

/// A commanded body motion. Exactly one of translation or rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BodyMotion {
    Translate(f64),
    Rotate(f64),
}

impl BodyMotion {
    /// Planar pose change for this command executed without error.
    pub fn as_delta(&self) -> Pose {
        match *self {
            BodyMotion::Translate(t) => Pose::new(0.0, 0.0, t, 0.0),
            BodyMotion::Rotate(r) => Pose::new(0.0, 0.0, 0.0, r),
        }
    }
}

/// What the body actually did: forward travel, turn, and sideways slip.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActualMotion {
    pub translate: f64,
    pub rotate: f64,
    pub lateral_drift: f64,
}

impl ActualMotion {
    /// Translate forward (with sideways drift), then turn.
    pub fn as_delta(&self) -> Pose {
        Pose::new(self.lateral_drift, 0.0, self.translate, self.rotate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoiseSpec {
    pub multiplier: f64,
    /// Per-step translation error std at multiplier 1 (meters).
    pub trans_sigma_at_1: f64,
    /// Per-turn rotation error std at multiplier 1 (radians).
    pub rot_sigma_at_1: f64,
    /// Sideways drift std for translations at multiplier 1 (meters).
    pub lateral_sigma_at_1: f64,
    pub trans_bias: f64,
    pub rot_bias: f64,
    pub lateral_bias: f64,
}

impl Default for MotionNoiseSpec {
    fn default() -> Self {
        Self {
            multiplier: 0.0,
            trans_sigma_at_1: STEP_LENGTH,
            rot_sigma_at_1: TURN_ANGLE * 0.25,
            lateral_sigma_at_1: 0.05,
            trans_bias: 0.0,
            rot_bias: 0.0,
            lateral_bias: 0.0,
        }
    }
}

impl MotionNoiseSpec {
    pub fn with_multiplier(multiplier: f64) -> Self {
        Self {
            multiplier,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [self.trans_sigma_at_1, self.rot_sigma_at_1, self.lateral_sigma_at_1];
        if !(self.multiplier >= 0.0) || sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err(format!("multiplier and sigmas must be >= 0: {self:?}"));
        }
        Ok(())
    }
}

/// Samples the executed motion for a command. Two standard normals are
/// drawn per call whatever the command or multiplier, so rng streams stay
/// aligned across noise settings.
pub fn perturb_motion<R: Rng + ?Sized>(
    commanded: BodyMotion,
    spec: &MotionNoiseSpec,
    rng: &mut R,
) -> ActualMotion {
    let n1: f64 = rng.sample(StandardNormal);
    let n2: f64 = rng.sample(StandardNormal);
    let m = spec.multiplier;
    match commanded {
        BodyMotion::Translate(t) => ActualMotion {
            translate: t + m * (spec.trans_bias + spec.trans_sigma_at_1 * n1),
            rotate: 0.0,
            lateral_drift: m * (spec.lateral_bias + spec.lateral_sigma_at_1 * n2),
        },
        BodyMotion::Rotate(r) => ActualMotion {
            translate: 0.0,
            rotate: r + m * (spec.rot_bias + spec.rot_sigma_at_1 * n1),
            lateral_drift: 0.0,
        },
    }
}

/// The agent's belief of its pose relative to where the episode started.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadReckonState {
    pub pose_estimate: Pose,
    pub step_count: u32,
}

impl Default for DeadReckonState {
    fn default() -> Self {
        Self {
            pose_estimate: Pose::IDENTITY,
            step_count: 0,
        }
    }
}

/// Integrates the commanded motion; the noise the body actually suffered is
/// invisible here.
pub fn dead_reckon(state: &DeadReckonState, commanded: BodyMotion) -> DeadReckonState {
    DeadReckonState {
        pose_estimate: state.pose_estimate.compose(&commanded.as_delta()),
        step_count: state.step_count + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::rng_from;

    #[test]
    fn zero_multiplier_is_exact() {
        let spec = MotionNoiseSpec {
            trans_bias: 0.3,
            rot_bias: 0.2,
            ..MotionNoiseSpec::with_multiplier(0.0)
        };
        let mut rng = rng_from(1);
        for _ in 0..100 {
            let a = perturb_motion(BodyMotion::Translate(0.2), &spec, &mut rng);
            assert_eq!(a, ActualMotion { translate: 0.2, rotate: 0.0, lateral_drift: 0.0 });
            let a = perturb_motion(BodyMotion::Rotate(TURN_ANGLE), &spec, &mut rng);
            assert_eq!(a.rotate, TURN_ANGLE);
        }
    }

    #[test]
    fn all_zero_spec_is_identity_at_any_multiplier() {
        let spec = MotionNoiseSpec {
            multiplier: 3.0,
            trans_sigma_at_1: 0.0,
            rot_sigma_at_1: 0.0,
            lateral_sigma_at_1: 0.0,
            trans_bias: 0.0,
            rot_bias: 0.0,
            lateral_bias: 0.0,
        };
        let mut rng = rng_from(2);
        let a = perturb_motion(BodyMotion::Translate(0.2), &spec, &mut rng);
        assert_eq!(a, ActualMotion { translate: 0.2, rotate: 0.0, lateral_drift: 0.0 });
    }

    #[test]
    fn rotation_has_no_translation() {
        let mut rng = rng_from(3);
        let spec = MotionNoiseSpec::with_multiplier(1.0);
        for _ in 0..100 {
            let a = perturb_motion(BodyMotion::Rotate(-TURN_ANGLE), &spec, &mut rng);
            assert_eq!((a.translate, a.lateral_drift), (0.0, 0.0));
        }
    }

    #[test]
    fn eight_right_turns_close_the_loop() {
        let mut s = DeadReckonState::default();
        for _ in 0..8 {
            s = dead_reckon(&s, BodyMotion::Rotate(TURN_ANGLE));
        }
        assert!(s.pose_estimate.yaw.abs() < 1e-12);
        assert_eq!(s.step_count, 8);
    }

    #[test]
    fn move_ahead_at_zero_yaw() {
        let s = dead_reckon(&DeadReckonState::default(), BodyMotion::Translate(STEP_LENGTH));
        assert_eq!(s.pose_estimate.z, 0.2);
        assert_eq!(s.pose_estimate.x, 0.0);
    }
}
