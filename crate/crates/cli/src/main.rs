use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};
use trajunc_core::calibration::presets;
use trajunc_core::config::RunConfig;
use trajunc_core::harness::{self, RunManifest};

#[derive(Parser)]
#[command(name = "trajunc", version, about = "Uncertainty-aware endpoint sampling and evaluation for trajectory heatmaps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Also write SVG charts where a command has them.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Resample scenes to the standard rate and window.
    Standardize {
        input: PathBuf,
        /// Output file name inside --out.
        #[arg(long, default_value = "standardized.jsonl")]
        output: String,
    },
    /// Generate a synthetic heatmap dataset.
    Synth {
        #[arg(long, short)]
        n: u64,
    },
    /// Sample endpoints from heatmaps.
    Sample {
        heatmaps: PathBuf,
        #[command(flatten)]
        radius: RadiusArgs,
    },
    /// Fit the uncertainty-to-radius model.
    Calibrate {
        heatmaps: PathBuf,
        ground_truth: PathBuf,
        /// Dataset tag recorded in the model.
        #[arg(long, default_value = "custom")]
        tag: String,
    },
    /// Score sampled endpoints against ground truth.
    Evaluate {
        heatmaps: PathBuf,
        ground_truth: PathBuf,
        #[command(flatten)]
        radius: RadiusArgs,
    },
    /// Run every model against every test set in a manifest.
    CrossEval { manifest: PathBuf },
    /// Binned analyses.
    #[command(subcommand)]
    Analysis(Analysis),
}

#[derive(Subcommand)]
enum Analysis {
    /// Mean minFDE_1 per integer uncertainty bin.
    UncertaintyError { heatmaps: PathBuf, ground_truth: PathBuf },
    /// Kalman-filter perception noise per scene.
    NoiseReport { scenes: PathBuf },
    /// Average speed distribution.
    SpeedReport { scenes: PathBuf },
}

#[derive(Args)]
struct RadiusArgs {
    /// Fixed NMS radius in meters.
    #[arg(long, conflicts_with_all = ["calibration", "preset"])]
    radius: Option<f64>,
    /// Calibration model JSON for an adaptive radius.
    #[arg(long, conflicts_with = "preset")]
    calibration: Option<PathBuf>,
    /// Built-in calibration model.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(presets::NAMES))]
    preset: Option<String>,
}

impl RadiusArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        use trajunc_core::sampling::RadiusMode;
        let mode = if let Some(r) = self.radius {
            RadiusMode::Fixed(r)
        } else if let Some(path) = &self.calibration {
            RadiusMode::Adaptive(harness::load_calibration(path)?)
        } else if let Some(name) = &self.preset {
            RadiusMode::Adaptive(presets::get(name).with_context(|| format!("unknown preset {name}"))?)
        } else {
            return Ok(());
        };
        cfg.sampling = cfg.sampling.with_radius(mode);
        cfg.sampling.validate()?;
        Ok(())
    }
}

/// Outcome of a command that can partially fail.
enum Outcome {
    Done,
    Partial,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.scenario.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = load_config(&cli.common)?;
    let out = cli.common.out.as_path();
    let svg = cli.common.svg;
    let command_name = command_name(&cli.command);
    let outcome = harness::with_workers(cli.common.workers, || -> Result<Outcome> {
        match &cli.command {
            Command::Standardize { input, output } => {
                let summary = harness::cmd_standardize(input, &out.join(output), &cfg)?;
                info!("standardized {} scenes, {} failed", summary.written, summary.failed.len());
            }
            Command::Synth { n } => {
                let files = harness::cmd_synth(&cfg, *n, out)?;
                info!("wrote {} and {}", files.heatmaps.display(), files.ground_truth.display());
            }
            Command::Sample { heatmaps, radius } => {
                radius.apply(&mut cfg)?;
                let n = harness::cmd_sample(heatmaps, &cfg, &out.join("predictions.jsonl"))?;
                info!("sampled {n} heatmaps");
            }
            Command::Calibrate { heatmaps, ground_truth, tag } => {
                let fit = harness::cmd_calibrate(heatmaps, ground_truth, &cfg, tag, out, svg)?;
                info!("r = {} * U + {} over {} bins", fit.model.a, fit.model.b, fit.bins.len());
            }
            Command::Evaluate { heatmaps, ground_truth, radius } => {
                radius.apply(&mut cfg)?;
                let r = harness::cmd_evaluate(heatmaps, ground_truth, &cfg, out)?;
                let k = cfg.sampling.k;
                info!("minFDE_{k} = {:.4}, MR_{k} = {:.4}", r.report.min_fde(k), r.report.miss_rate(k));
            }
            Command::CrossEval { manifest } => {
                let m = RunManifest::load(manifest).with_context(|| format!("loading manifest {}", manifest.display()))?;
                let dir = m.output_dir.clone().unwrap_or_else(|| out.to_path_buf());
                let matrix = harness::cmd_cross_eval(&m, &cfg, &dir, svg)?;
                harness::write_run_meta(&dir, command_name, &cfg.hash())?;
                let failed = matrix.failed_cells();
                if failed == matrix.total_cells() {
                    anyhow::bail!("every cell of the matrix failed");
                }
                if failed > 0 {
                    warn!("{failed} of {} cells failed", matrix.total_cells());
                    return Ok(Outcome::Partial);
                }
                return Ok(Outcome::Done);
            }
            Command::Analysis(Analysis::UncertaintyError { heatmaps, ground_truth }) => {
                let r = harness::analysis_uncertainty_error(heatmaps, ground_truth, &cfg, out, svg)?;
                info!("{} bins, spearman {:?}", r.bins.len(), r.spearman);
            }
            Command::Analysis(Analysis::NoiseReport { scenes }) => {
                harness::analysis_noise_report(scenes, &cfg, out)?;
            }
            Command::Analysis(Analysis::SpeedReport { scenes }) => {
                harness::analysis_speed_report(scenes, &cfg, out)?;
            }
        }
        harness::write_run_meta(out, command_name, &cfg.hash())?;
        Ok(Outcome::Done)
    })??;
    Ok(outcome)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Standardize { .. } => "standardize",
        Command::Synth { .. } => "synth",
        Command::Sample { .. } => "sample",
        Command::Calibrate { .. } => "calibrate",
        Command::Evaluate { .. } => "evaluate",
        Command::CrossEval { .. } => "cross-eval",
        Command::Analysis(Analysis::UncertaintyError { .. }) => "analysis uncertainty-error",
        Command::Analysis(Analysis::NoiseReport { .. }) => "analysis noise-report",
        Command::Analysis(Analysis::SpeedReport { .. }) => "analysis speed-report",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
