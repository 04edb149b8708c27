//! Curve files for plotting and a plain-text summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::experiment::{write_csv, EpisodeRow, ExperimentResults};
use crate::{HarnessError, Result};

pub const AXES: [&str; 5] = ["motion_mult", "depth_severity", "keep_fraction", "present_prob", "confuse_prob"];
pub const METRICS: [&str; 5] = ["PU", "SR", "SRwD", "eplen", "terminal_est_error"];

pub fn axis_value(e: &EpisodeRow, axis: &str) -> f64 {
    match axis {
        "motion_mult" => e.motion_mult,
        "depth_severity" => e.depth_severity,
        "keep_fraction" => e.keep_fraction,
        "present_prob" => e.present_prob,
        "confuse_prob" => e.confuse_prob,
        _ => panic!("unknown axis {axis}"),
    }
}

/// Per-episode value of a metric; `None` when it does not apply.
pub fn metric_value(e: &EpisodeRow, metric: &str) -> Option<f64> {
    let b = |v: bool| Some(if v { 1.0 } else { 0.0 });
    match metric {
        "PU" => b(e.picked_up),
        "SR" => b(e.success),
        "SRwD" => b(e.success && !e.disturbed),
        "eplen" => Some(e.length as f64),
        "terminal_est_error" => e.terminal_dest_error,
        _ => panic!("unknown metric {metric}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub policy: String,
    pub x: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Mean and standard error (sample standard deviation over root n).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Axes with more than one value among the episodes.
pub fn swept_axes(episodes: &[EpisodeRow]) -> Vec<&'static str> {
    AXES.into_iter()
        .filter(|&a| {
            let first = episodes.first().map(|e| axis_value(e, a));
            episodes.iter().any(|e| Some(axis_value(e, a)) != first)
        })
        .collect()
}

/// Curve for one axis, pooling the other axes. Sorted by x, then policy,
/// then metric.
pub fn curve(episodes: &[EpisodeRow], axis: &str) -> Vec<CurvePoint> {
    let mut groups: BTreeMap<(u64, String, usize), Vec<f64>> = BTreeMap::new();
    for e in episodes {
        let x = axis_value(e, axis);
        for (mi, m) in METRICS.iter().enumerate() {
            if let Some(v) = metric_value(e, m) {
                // x >= 0 everywhere, so the bit pattern orders like the value
                groups
                    .entry((x.to_bits(), e.policy.name().to_string(), mi))
                    .or_default()
                    .push(v);
            }
        }
    }
    groups
        .into_iter()
        .map(|((x, policy, mi), values)| {
            let (mean, stderr) = mean_stderr(&values);
            CurvePoint {
                policy,
                x: f64::from_bits(x),
                metric: METRICS[mi].to_string(),
                mean,
                stderr,
                n: values.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub summary: String,
    pub curve_files: Vec<PathBuf>,
}

/// Writes `curve_<axis>.csv` for each swept axis and `summary.txt`.
pub fn emit_report(results: &ExperimentResults, dir: &Path) -> Result<Report> {
    if results.rows.is_empty() && results.episodes.is_empty() {
        return Err(HarnessError::EmptyResults);
    }
    fs::create_dir_all(dir)?;
    let mut curve_files = Vec::new();
    for axis in swept_axes(&results.episodes) {
        let path = dir.join(format!("curve_{axis}.csv"));
        write_csv(&path, &curve(&results.episodes, axis))?;
        curve_files.push(path);
    }

    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "{:<13} {:>6} {:>6} {:>6} {:>6} {:>6} {:>5} {:>6} {:>6} {:>6} {:>8} {:>8}",
        "policy", "motion", "depth", "keep", "pres", "conf", "N", "PU", "SR", "SRwD", "eplen", "est_err"
    );
    for r in &results.rows {
        let _ = writeln!(
            summary,
            "{:<13} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>5} {:>6.3} {:>6.3} {:>6.3} {:>8.1} {:>8.4}",
            r.policy.name(),
            r.motion_mult,
            r.depth_severity,
            r.keep_fraction,
            r.present_prob,
            r.confuse_prob,
            r.n,
            r.pu,
            r.sr,
            r.srwd,
            r.mean_eplen,
            r.mean_terminal_est_error
        );
    }
    if !results.failures.is_empty() {
        let _ = writeln!(summary, "{} episode(s) failed; see failures.csv", results.failures.len());
    }
    fs::write(dir.join("summary.txt"), &summary)?;
    Ok(Report { summary, curve_files })
}
