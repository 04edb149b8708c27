use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use objdis_core::policies::PolicyKind;
use objdis_core::scene::{generate_scene, generate_task_dataset, SceneParams};
use objdis_harness::config::{resolve_output, ExperimentSpec, CONFIG_SCHEMA_VERSION};
use objdis_harness::dataset::Dataset;
use objdis_harness::experiment::{read_csv, run_experiment, Cell, EpisodeRow, ExperimentResults, ResultRow};
use objdis_harness::report::emit_report;
use objdis_harness::runner::{run_episode, EpisodeSpec};

#[derive(Parser)]
#[command(name = "objdis", version, about = "Object-displacement simulator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write scene JSON files for a range of seeds.
    GenScenes {
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 10)]
        count: u64,
        /// Scene parameters as JSON (defaults when omitted).
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample task configurations into a JSON-lines dataset.
    GenDataset {
        #[arg(long, default_value_t = 0)]
        start: u64,
        #[arg(long, default_value_t = 100)]
        count: u64,
        #[arg(long, default_value_t = 1)]
        pairs: usize,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode and print its summary.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value = "estimator")]
        policy: PolicyKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        motion_mult: f64,
        #[arg(long, default_value_t = 0.0)]
        depth_severity: f64,
        #[arg(long, default_value_t = 1.0)]
        keep_fraction: f64,
        #[arg(long, default_value_t = 1.0)]
        present_prob: f64,
        #[arg(long, default_value_t = 0.0)]
        confuse_prob: f64,
        /// Write the step log here (gzip when the name ends in .gz).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run a sweep and emit its report.
    Sweep(SweepArgs),
    /// Rebuild curve files and the summary from a results directory.
    Report {
        #[arg(long)]
        results: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment spec; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    #[arg(long, value_delimiter = ',')]
    motion_multipliers: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    depth_severities: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    keep_fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    present_probs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    confuse_probs: Option<Vec<f64>>,
    #[arg(long)]
    episodes_per_cell: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    write_logs: bool,
    #[arg(long)]
    gzip_logs: bool,
}

impl SweepArgs {
    fn into_spec(self) -> anyhow::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)?,
            None => ExperimentSpec {
                schema_version: CONFIG_SCHEMA_VERSION,
                dataset: self.dataset.clone().context("--dataset is required without --config")?,
                policies: vec![PolicyKind::Estimator],
                motion_multipliers: vec![0.0],
                depth_severities: vec![0.0],
                keep_fractions: vec![1.0],
                present_probs: vec![1.0],
                confuse_probs: vec![0.0],
                episodes_per_cell: 10,
                master_seed: 0,
                output_dir: self.output_dir.clone().context("--output-dir is required without --config")?,
                write_logs: false,
                gzip_logs: false,
                settings: None,
                policy_config: None,
            },
        };
        if let Some(v) = self.dataset {
            spec.dataset = v;
        }
        if let Some(v) = self.policies {
            spec.policies = v;
        }
        if let Some(v) = self.motion_multipliers {
            spec.motion_multipliers = v;
        }
        if let Some(v) = self.depth_severities {
            spec.depth_severities = v;
        }
        if let Some(v) = self.keep_fractions {
            spec.keep_fractions = v;
        }
        if let Some(v) = self.present_probs {
            spec.present_probs = v;
        }
        if let Some(v) = self.confuse_probs {
            spec.confuse_probs = v;
        }
        if let Some(v) = self.episodes_per_cell {
            spec.episodes_per_cell = v;
        }
        if let Some(v) = self.master_seed {
            spec.master_seed = v;
        }
        if let Some(v) = self.output_dir {
            spec.output_dir = v;
        }
        spec.write_logs |= self.write_logs;
        spec.gzip_logs |= self.gzip_logs;
        spec.validate()?;
        Ok(spec)
    }
}

fn load_params(path: Option<&PathBuf>) -> anyhow::Result<SceneParams> {
    Ok(match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| p.display().to_string())?)?,
        None => SceneParams::default(),
    })
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenScenes { start, count, params, out } => {
            let params = load_params(params.as_ref())?;
            let out = resolve_output(&out);
            fs::create_dir_all(&out)?;
            for seed in start..start + count {
                match generate_scene(seed, &params) {
                    Ok(scene) => fs::write(out.join(format!("scene_{seed}.json")), scene.to_json())?,
                    Err(e) => log::warn!("{e}"),
                }
            }
        }
        Command::GenDataset { start, count, pairs, params, out } => {
            let params = load_params(params.as_ref())?;
            let data = generate_task_dataset(start..start + count, &params, pairs);
            for s in &data.skipped {
                log::warn!("seed {}: {}", s.seed, s.reason);
            }
            let out = resolve_output(&out);
            Dataset {
                params,
                configs: data.configs,
            }
            .write(&out)?;
            log::info!("wrote {}", out.display());
        }
        Command::Run {
            dataset,
            index,
            policy,
            seed,
            motion_mult,
            depth_severity,
            keep_fraction,
            present_prob,
            confuse_prob,
            log,
        } => {
            let data = Dataset::read(&dataset)?;
            let Some(config) = data.configs.get(index) else {
                bail!("index {index} out of range ({} configs)", data.configs.len());
            };
            let cell = Cell {
                policy,
                motion_mult,
                depth_severity,
                keep_fraction,
                present_prob,
                confuse_prob,
            };
            let spec = EpisodeSpec::new(policy, cell.noise());
            let episode = run_episode(config, &data.params, &spec, seed)?;
            if let Some(path) = log {
                let gzip = path.extension().is_some_and(|e| e == "gz");
                episode.write(&resolve_output(&path), gzip)?;
            }
            println!("{}", serde_json::to_string_pretty(&episode.summary)?);
            println!("log sha256 {}", episode.hash());
        }
        Command::Sweep(args) => {
            let spec = args.into_spec()?;
            let results = run_experiment(&spec)?;
            let report = emit_report(&results, &spec.resolved_output_dir())?;
            print!("{}", report.summary);
        }
        Command::Report { results } => {
            let dir = resolve_output(&results);
            let loaded = ExperimentResults {
                rows: read_csv::<ResultRow>(&dir.join("results.csv"))?,
                episodes: read_csv::<EpisodeRow>(&dir.join("episodes.csv"))?,
                failures: Vec::new(),
            };
            let report = emit_report(&loaded, &dir)?;
            print!("{}", report.summary);
        }
    }
    Ok(())
}
