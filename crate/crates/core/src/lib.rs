//! Simulation core for embodied object displacement: geometry, procedural
//! rooms, sensors, odometry, target localization, the environment and the
//! scripted policies that drive it.

pub mod estimator;
pub mod geometry;
pub mod odometry;
pub mod policies;
pub mod scene;
pub mod seeding;
pub mod sensors;
pub mod task;

pub use estimator::{estimate_step, Blend, SensorBundle, TargetEstimate, TrackStatus};
pub use geometry::{Aabb, CameraModel, Point3, Pose};
pub use scene::{generate_scene, generate_task_dataset, Scene, SceneParams, TaskConfig, TaskInstance};
pub use task::{compute_metrics, Action, EpisodeState, Metrics, NoiseSettings, Observation, TaskSettings};
pub use policies::{act, PolicyConfig, PolicyKind, PolicyState};
