//! Experiment specification, loaded from TOML.
//!
//! ```toml
//! schema_version = 1
//! dataset = "data/tasks.jsonl"
//! policies = ["estimator", "gt_direction"]
//! motion_multipliers = [0.0, 0.5, 1.0]
//! depth_severities = [0.0]
//! keep_fractions = [1.0]
//! present_probs = [1.0]
//! confuse_probs = [0.0]
//! episodes_per_cell = 50
//! master_seed = 7
//! output_dir = "runs/motion"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use objdis_core::policies::{PolicyConfig, PolicyKind};
use objdis_core::task::TaskSettings;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable that relocates relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "OBJDIS_OUTPUT_ROOT";

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn zero() -> Vec<f64> {
    vec![0.0]
}

fn one() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub dataset: PathBuf,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "zero")]
    pub motion_multipliers: Vec<f64>,
    #[serde(default = "zero")]
    pub depth_severities: Vec<f64>,
    #[serde(default = "one")]
    pub keep_fractions: Vec<f64>,
    #[serde(default = "one")]
    pub present_probs: Vec<f64>,
    #[serde(default = "zero")]
    pub confuse_probs: Vec<f64>,
    pub episodes_per_cell: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Write a JSON-lines log per episode under `output_dir/logs`.
    #[serde(default)]
    pub write_logs: bool,
    #[serde(default)]
    pub gzip_logs: bool,
    #[serde(default)]
    pub settings: Option<TaskSettings>,
    #[serde(default)]
    pub policy_config: Option<PolicyConfig>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<ExperimentSpec> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.policies.is_empty() {
            return bad("policies is empty".into());
        }
        if self.episodes_per_cell == 0 {
            return bad("episodes_per_cell must be at least 1".into());
        }
        let grids = [
            ("motion_multipliers", &self.motion_multipliers, f64::INFINITY),
            ("depth_severities", &self.depth_severities, f64::INFINITY),
            ("keep_fractions", &self.keep_fractions, 1.0),
            ("present_probs", &self.present_probs, 1.0),
            ("confuse_probs", &self.confuse_probs, 1.0),
        ];
        for (name, values, max) in grids {
            if values.is_empty() {
                return bad(format!("{name} is empty"));
            }
            if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && **v <= max)) {
                return bad(format!("{name} contains {v}, outside [0, {max}]"));
            }
        }
        Ok(())
    }

    /// `output_dir`, placed under the output-root override when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if dir.is_relative() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}
