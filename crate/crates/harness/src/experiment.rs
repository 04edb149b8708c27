//! Grid sweeps over noise and segmentation degradation.

use std::fs;
use std::path::Path;

use objdis_core::odometry::MotionNoiseSpec;
use objdis_core::policies::{PolicyConfig, PolicyKind};
use objdis_core::scene::{SceneParams, TaskConfig};
use objdis_core::seeding::{derive_indexed, derive_seed};
use objdis_core::sensors::{DegradationSpec, DepthNoiseSpec};
use objdis_core::task::{compute_metrics, EpisodeSummary, NoiseSettings, TaskSettings};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::dataset::Dataset;
use crate::runner::{run_episode, EpisodeLog, EpisodeSpec};
use crate::{HarnessError, Result};

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: PolicyKind,
    pub motion_mult: f64,
    pub depth_severity: f64,
    pub keep_fraction: f64,
    pub present_prob: f64,
    pub confuse_prob: f64,
}

impl Cell {
    /// Stable textual key; the cell seed is derived from it, so adding
    /// cells to a grid leaves the others' seeds untouched.
    pub fn key(&self) -> String {
        format!(
            "{}|{:?}|{:?}|{:?}|{:?}|{:?}",
            self.policy.name(),
            self.motion_mult,
            self.depth_severity,
            self.keep_fraction,
            self.present_prob,
            self.confuse_prob
        )
    }

    pub fn seed(&self, master_seed: u64) -> u64 {
        derive_seed(master_seed, &self.key())
    }

    pub fn episode_seed(&self, master_seed: u64, index: usize) -> u64 {
        derive_indexed(self.seed(master_seed), "episode", index as u64)
    }

    pub fn noise(&self) -> NoiseSettings {
        NoiseSettings {
            motion: MotionNoiseSpec::with_multiplier(self.motion_mult),
            depth: DepthNoiseSpec::with_severity(self.depth_severity),
            degradation: DegradationSpec {
                keep_fraction: self.keep_fraction,
                present_prob: self.present_prob,
                confuse_prob: self.confuse_prob,
                rng_stream: 0,
            },
        }
    }
}

/// The grid product in a fixed order (policy outermost).
pub fn cells(spec: &ExperimentSpec) -> Vec<Cell> {
    let mut out = Vec::new();
    for &policy in &spec.policies {
        for &motion_mult in &spec.motion_multipliers {
            for &depth_severity in &spec.depth_severities {
                for &keep_fraction in &spec.keep_fractions {
                    for &present_prob in &spec.present_probs {
                        for &confuse_prob in &spec.confuse_probs {
                            out.push(Cell {
                                policy,
                                motion_mult,
                                depth_severity,
                                keep_fraction,
                                present_prob,
                                confuse_prob,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// One aggregated CSV row per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: PolicyKind,
    pub motion_mult: f64,
    pub depth_severity: f64,
    pub keep_fraction: f64,
    pub present_prob: f64,
    pub confuse_prob: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "PU")]
    pub pu: f64,
    #[serde(rename = "SR")]
    pub sr: f64,
    #[serde(rename = "SRwD")]
    pub srwd: f64,
    pub mean_eplen: f64,
    pub src_visibility: f64,
    pub dst_visibility: f64,
    pub mean_terminal_est_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub policy: PolicyKind,
    pub motion_mult: f64,
    pub depth_severity: f64,
    pub keep_fraction: f64,
    pub present_prob: f64,
    pub confuse_prob: f64,
    pub index: usize,
    pub config_index: usize,
    pub seed: u64,
    pub picked_up: bool,
    pub success: bool,
    pub disturbed: bool,
    pub length: u32,
    pub src_visibility: f64,
    pub dst_visibility: f64,
    pub terminal_dest_error: Option<f64>,
    pub total_reward: f64,
    pub log_hash: String,
}

impl EpisodeRow {
    pub fn cell(&self) -> Cell {
        Cell {
            policy: self.policy,
            motion_mult: self.motion_mult,
            depth_severity: self.depth_severity,
            keep_fraction: self.keep_fraction,
            present_prob: self.present_prob,
            confuse_prob: self.confuse_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub cell: String,
    pub index: usize,
    pub config_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub episodes: Vec<EpisodeRow>,
    pub failures: Vec<FailureRow>,
}

fn fraction(n: u32, d: u32) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

fn aggregate(cell: &Cell, episodes: &[EpisodeSummary]) -> ResultRow {
    let m = compute_metrics(episodes).ok();
    ResultRow {
        policy: cell.policy,
        motion_mult: cell.motion_mult,
        depth_severity: cell.depth_severity,
        keep_fraction: cell.keep_fraction,
        present_prob: cell.present_prob,
        confuse_prob: cell.confuse_prob,
        n: episodes.len(),
        pu: m.map_or(f64::NAN, |m| m.pu),
        sr: m.map_or(f64::NAN, |m| m.sr),
        srwd: m.map_or(f64::NAN, |m| m.srwd),
        mean_eplen: m.map_or(f64::NAN, |m| m.mean_eplen),
        src_visibility: m.map_or(f64::NAN, |m| m.source_visibility),
        dst_visibility: m.map_or(f64::NAN, |m| m.dest_visibility),
        mean_terminal_est_error: m.map_or(f64::NAN, |m| m.mean_terminal_est_error),
    }
}

/// Inputs of a sweep that do not come from the grid.
#[derive(Debug, Clone)]
pub struct SweepInputs<'a> {
    pub params: &'a SceneParams,
    pub configs: &'a [TaskConfig],
    pub settings: TaskSettings,
    pub policy_config: PolicyConfig,
    pub master_seed: u64,
    pub episodes_per_cell: usize,
}

/// Runs every (cell, episode) pair; episode `i` of every cell uses dataset
/// entry `i` (wrapping around short datasets). Results come back in grid
/// order whatever order the episodes finish in.
pub fn run_cells(
    cells: &[Cell],
    inputs: &SweepInputs<'_>,
    mut on_log: impl FnMut(&Cell, usize, &EpisodeLog) -> Result<()>,
) -> Result<ExperimentResults> {
    if inputs.configs.is_empty() {
        return Err(HarnessError::Config("dataset has no task configs".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..inputs.episodes_per_cell).map(move |i| (c, i)))
        .collect();
    let outcomes: Vec<(usize, usize, usize, u64, std::result::Result<EpisodeLog, String>)> = jobs
        .par_iter()
        .map(|&(c, i)| {
            let cell = &cells[c];
            let config_index = i % inputs.configs.len();
            let seed = cell.episode_seed(inputs.master_seed, i);
            let spec = EpisodeSpec {
                policy: cell.policy,
                policy_config: inputs.policy_config.clone(),
                settings: inputs.settings.clone(),
                noise: cell.noise(),
            };
            let log = run_episode(&inputs.configs[config_index], inputs.params, &spec, seed).map_err(|e| e.to_string());
            (c, i, config_index, seed, log)
        })
        .collect();

    let mut results = ExperimentResults::default();
    let mut per_cell: Vec<Vec<EpisodeSummary>> = vec![Vec::new(); cells.len()];
    for (c, i, config_index, seed, log) in outcomes {
        let cell = &cells[c];
        match log {
            Ok(log) => {
                on_log(cell, i, &log)?;
                let s = log.summary;
                results.episodes.push(EpisodeRow {
                    policy: cell.policy,
                    motion_mult: cell.motion_mult,
                    depth_severity: cell.depth_severity,
                    keep_fraction: cell.keep_fraction,
                    present_prob: cell.present_prob,
                    confuse_prob: cell.confuse_prob,
                    index: i,
                    config_index,
                    seed,
                    picked_up: s.picked_up,
                    success: s.success,
                    disturbed: s.disturbed,
                    length: s.length,
                    src_visibility: fraction(s.source_visible_frames, s.frames),
                    dst_visibility: fraction(s.dest_visible_frames, s.frames),
                    terminal_dest_error: s.terminal_dest_error,
                    total_reward: s.total_reward,
                    log_hash: log.hash(),
                });
                per_cell[c].push(s);
            }
            Err(error) => {
                log::warn!("cell {} episode {i}: {error}", cell.key());
                results.failures.push(FailureRow {
                    cell: cell.key(),
                    index: i,
                    config_index,
                    error,
                });
            }
        }
    }
    results.rows = cells.iter().zip(&per_cell).map(|(c, e)| aggregate(c, e)).collect();
    Ok(results)
}

/// Loads the dataset, runs the sweep and writes `results.csv`,
/// `episodes.csv` and, when any episode failed, `failures.csv`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let dataset = Dataset::read(&spec.dataset)?;
    let out_dir = spec.resolved_output_dir();
    fs::create_dir_all(&out_dir)?;
    let inputs = SweepInputs {
        params: &dataset.params,
        configs: &dataset.configs,
        settings: spec.settings.clone().unwrap_or_default(),
        policy_config: spec.policy_config.clone().unwrap_or_default(),
        master_seed: spec.master_seed,
        episodes_per_cell: spec.episodes_per_cell,
    };
    let grid = cells(spec);
    let logs_dir = out_dir.join("logs");
    let results = run_cells(&grid, &inputs, |cell, i, log| {
        if spec.write_logs {
            let cell_index = grid.iter().position(|c| c == cell).expect("cell in grid");
            let ext = if spec.gzip_logs { "jsonl.gz" } else { "jsonl" };
            let path = logs_dir.join(format!("cell{cell_index:03}")).join(format!("episode{i:05}.{ext}"));
            log.write(&path, spec.gzip_logs)?;
        }
        Ok(())
    })?;
    write_results(&results, &out_dir)?;
    Ok(results)
}

pub fn write_results(results: &ExperimentResults, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &results.rows)?;
    write_csv(&dir.join("episodes.csv"), &results.episodes)?;
    let failures = dir.join("failures.csv");
    if results.failures.is_empty() {
        if failures.exists() {
            fs::remove_file(failures)?;
        }
    } else {
        write_csv(&failures, &results.failures)?;
    }
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}
