//! Single-episode rollouts.

use std::fs;
use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use objdis_core::policies::{act, PolicyConfig, PolicyKind, PolicyState};
use objdis_core::scene::{SceneParams, TaskConfig, TaskInstance};
use objdis_core::task::{Done, EpisodeState, EpisodeSummary, NoiseSettings, StepRecord, TaskSettings};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Result;

/// Everything besides the task that determines an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub policy: PolicyKind,
    pub policy_config: PolicyConfig,
    pub settings: TaskSettings,
    pub noise: NoiseSettings,
}

impl EpisodeSpec {
    pub fn new(policy: PolicyKind, noise: NoiseSettings) -> Self {
        Self {
            policy,
            policy_config: PolicyConfig::default(),
            settings: TaskSettings::default(),
            noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub done: Done,
    pub summary: EpisodeSummary,
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Hex SHA-256 of the JSON-lines log.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn write(&self, path: &Path, gzip: bool) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = fs::File::create(path)?;
        let body = self.to_jsonl();
        if gzip {
            let mut enc = GzEncoder::new(file, Compression::default());
            enc.write_all(body.as_bytes())?;
            enc.finish()?;
        } else {
            let mut file = file;
            file.write_all(body.as_bytes())?;
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs a task configuration to success or the step cap.
pub fn run_episode(config: &TaskConfig, params: &SceneParams, spec: &EpisodeSpec, seed: u64) -> Result<EpisodeLog> {
    let instance = config.instantiate(params)?;
    run_instance(&instance, spec, seed)
}

pub fn run_instance(instance: &TaskInstance, spec: &EpisodeSpec, seed: u64) -> Result<EpisodeLog> {
    let (mut state, mut obs) = EpisodeState::new(instance, spec.settings.clone(), spec.noise, seed)?;
    let mut policy = PolicyState::new();
    let mut records = Vec::new();
    while state.done == Done::Running {
        let action = act(spec.policy, &obs, &mut policy, &spec.policy_config);
        let out = state.step(action)?;
        records.push(out.record);
        obs = out.observation;
    }
    Ok(EpisodeLog {
        done: state.done,
        summary: state.summary(),
        records,
    })
}
