//! File-level pipelines behind the command-line tool. Each `cmd_*`
//! function reads its inputs, runs the library operations and writes its
//! artifacts into an output directory. Outputs depend only on the input
//! bytes and the run configuration; run timestamps go to a separate
//! `run_meta.json`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, CalibrationFit, CalibrationModel};
use crate::config::{content_hash, RunConfig};
use crate::formats::{
    eval_csv_string, prediction_to_line, read_ground_truth, read_heatmaps, read_lines, read_samples,
    read_text, sample_to_line, write_json, write_lines, write_text, GroundTruthRecord, HeatmapRecord,
    PredictionRecord,
};
use crate::heatmap::Heatmap;
use crate::metrics::{aggregate, bin_by_uncertainty, binned_trend, evaluate, AggregateReport, EvalRecord, UncertaintyBin};
use crate::noise::sample_noise;
use crate::numeric::Histogram;
use crate::sampling::{sample_with_uncertainty, RadiusMode, SamplingConfig};
use crate::synth::{generate_dataset, DatasetFiles};
use crate::trajectory::{filter_slow_agents, speed_histogram, standardize_sample};
use crate::{svg, Error, Point2, Result};

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Records the command, config hash and wall-clock time of a run. Kept out
/// of the primary artifacts so those stay byte-reproducible.
pub fn write_run_meta(out_dir: &Path, command: &str, config_hash: &str) -> Result<()> {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    write_json(
        &out_dir.join("run_meta.json"),
        &serde_json::json!({
            "command": command,
            "config_hash": config_hash,
            "unix_time": secs,
            "version": env!("CARGO_PKG_VERSION"),
        }),
    )
}

/// A heatmap matched with its ground-truth endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Paired {
    pub sample_id: String,
    pub heatmap: Heatmap,
    pub gt: Point2,
}

const MISMATCH_REPORT_LIMIT: usize = 10;

/// Joins heatmaps and ground truth on sample id. Output is sorted by id.
pub fn pair_inputs(heatmaps: Vec<HeatmapRecord>, gts: Vec<GroundTruthRecord>) -> Result<Vec<Paired>> {
    let mut gt_by_id = BTreeMap::new();
    for g in gts {
        let id = g.sample_id.clone();
        if gt_by_id.insert(id.clone(), g.gt).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(heatmaps.len());
    let mut missing = BTreeSet::new();
    for h in heatmaps {
        if !seen.insert(h.sample_id.clone()) {
            return Err(Error::DuplicateId(h.sample_id));
        }
        match gt_by_id.get(&h.sample_id) {
            Some(&gt) => pairs.push(Paired {
                sample_id: h.sample_id,
                heatmap: h.heatmap,
                gt,
            }),
            None => {
                missing.insert(h.sample_id);
            }
        }
    }
    missing.extend(gt_by_id.keys().filter(|id| !seen.contains(*id)).cloned());
    if !missing.is_empty() {
        return Err(Error::IdMismatch {
            count: missing.len(),
            first: missing.into_iter().take(MISMATCH_REPORT_LIMIT).collect(),
        });
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no heatmaps"));
    }
    pairs.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(pairs)
}

pub fn load_pairs(heatmaps: &Path, ground_truth: &Path) -> Result<Vec<Paired>> {
    pair_inputs(read_heatmaps(heatmaps)?, read_ground_truth(ground_truth)?)
}

/// Per-sample records in the order of `pairs`.
pub fn evaluate_pairs(pairs: &[Paired], sampling: &SamplingConfig) -> Result<Vec<EvalRecord>> {
    sampling.validate()?;
    pairs
        .par_iter()
        .map(|p| {
            let set = sample_with_uncertainty(&p.heatmap, sampling)?;
            evaluate(&p.sample_id, &set, p.gt, sampling.k)
        })
        .collect()
}

pub fn evaluate_and_aggregate(pairs: &[Paired], sampling: &SamplingConfig) -> Result<(Vec<EvalRecord>, AggregateReport)> {
    let records = evaluate_pairs(pairs, sampling)?;
    let report = aggregate(&records)?;
    Ok((records, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config_hash: String,
    pub sampling: SamplingConfig,
    pub report: AggregateReport,
}

pub const EVAL_RECORDS_FILE: &str = "eval_records.csv";
pub const EVAL_REPORT_FILE: &str = "report.json";

/// Samples every heatmap, scores it against its ground truth and writes
/// `eval_records.csv` and `report.json`.
pub fn cmd_evaluate(heatmaps: &Path, ground_truth: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<EvaluationReport> {
    let pairs = load_pairs(heatmaps, ground_truth)?;
    let (records, report) = evaluate_and_aggregate(&pairs, &cfg.sampling)?;
    write_text(&out_dir.join(EVAL_RECORDS_FILE), &eval_csv_string(&records)?)?;
    let out = EvaluationReport {
        config_hash: cfg.hash(),
        sampling: cfg.sampling.clone(),
        report,
    };
    write_json(&out_dir.join(EVAL_REPORT_FILE), &out)?;
    Ok(out)
}

/// Writes the prediction set of every heatmap, sorted by sample id.
pub fn cmd_sample(heatmaps: &Path, cfg: &RunConfig, output: &Path) -> Result<usize> {
    cfg.sampling.validate()?;
    let mut records = read_heatmaps(heatmaps)?;
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let lines = records
        .par_iter()
        .map(|r| {
            let set = sample_with_uncertainty(&r.heatmap, &cfg.sampling)?;
            Ok(prediction_to_line(&PredictionRecord::from_set(&r.sample_id, &set)))
        })
        .collect::<Result<Vec<_>>>()?;
    write_lines(output, &lines)?;
    Ok(lines.len())
}

pub const CALIBRATION_FILE: &str = "calibration.json";
pub const RADIUS_BINS_FILE: &str = "radius_bins.csv";

fn xy_count_csv<'a>(rows: impl IntoIterator<Item = (f64, f64, usize)> + 'a) -> String {
    let mut out = String::from("x,y,count\n");
    for (x, y, n) in rows {
        let _ = writeln!(out, "{x},{y},{n}");
    }
    out
}

/// Fits the uncertainty-to-radius model and writes `calibration.json` and
/// the binned optimal radii behind it.
pub fn cmd_calibrate(
    heatmaps: &Path,
    ground_truth: &Path,
    cfg: &RunConfig,
    source_dataset: &str,
    out_dir: &Path,
    with_svg: bool,
) -> Result<CalibrationFit> {
    let pairs = load_pairs(heatmaps, ground_truth)?;
    let dataset: Vec<(Heatmap, Point2)> = pairs.into_iter().map(|p| (p.heatmap, p.gt)).collect();
    let fit = calibrate(&dataset, &cfg.calibration, source_dataset)?;
    write_json(&out_dir.join(CALIBRATION_FILE), &fit.model)?;
    write_text(
        &out_dir.join(RADIUS_BINS_FILE),
        &xy_count_csv(fit.bins.iter().map(|b| (b.bin_center, b.mean_r_opt, b.count))),
    )?;
    if with_svg {
        let pts: Vec<(f64, f64)> = fit.bins.iter().map(|b| (b.bin_center, b.mean_r_opt)).collect();
        let title = format!("optimal radius vs uncertainty, r = {:.4} U + {:.4}", fit.model.a, fit.model.b);
        write_text(&out_dir.join("radius_bins.svg"), &svg::line_chart(&pts, &title, "U (m^2)", "mean r_opt (m)"))?;
    }
    Ok(fit)
}

pub fn load_calibration(path: &Path) -> Result<CalibrationModel> {
    CalibrationModel::from_json(&read_text(path)?)
}

pub fn cmd_synth(cfg: &RunConfig, n: u64, out_dir: &Path) -> Result<DatasetFiles> {
    generate_dataset(&cfg.scenario, n, out_dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeSummary {
    pub written: usize,
    /// `(line, message)` of every input line that could not be standardized.
    pub failed: Vec<(usize, String)>,
}

/// Standardizes every scene in `input`. Bad lines are logged and skipped;
/// the call fails only when the input is empty or no line succeeds.
pub fn cmd_standardize(input: &Path, output: &Path, cfg: &RunConfig) -> Result<StandardizeSummary> {
    cfg.standardization.validate()?;
    let lines = read_lines(input)?;
    if lines.is_empty() {
        return Err(Error::EmptyInput("no scenes in input"));
    }
    let mut out = Vec::with_capacity(lines.len());
    let mut failed = Vec::new();
    for (line, text) in &lines {
        let result = crate::formats::parse_sample_line(text)
            .and_then(|s| standardize_sample(&s, &cfg.standardization));
        match result {
            Ok(s) => out.push(s),
            Err(e) => {
                log::warn!("{}:{line}: {e}", input.display());
                failed.push((*line, e.to_string()));
            }
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("every scene failed to standardize"));
    }
    if let Some(fraction) = cfg.include_non_targets {
        out = filter_slow_agents(&out, fraction, cfg.seed)?;
    }
    write_lines(output, out.iter().map(sample_to_line))?;
    Ok(StandardizeSummary {
        written: out.len(),
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyErrorReport {
    pub config_hash: String,
    pub spearman: Option<f64>,
    pub sample_count: usize,
    pub bins: Vec<UncertaintyBin>,
}

/// Mean minFDE_1 per integer uncertainty bin.
pub fn analysis_uncertainty_error(
    heatmaps: &Path,
    ground_truth: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    with_svg: bool,
) -> Result<UncertaintyErrorReport> {
    let pairs = load_pairs(heatmaps, ground_truth)?;
    let records = evaluate_pairs(&pairs, &cfg.sampling)?;
    let bins = bin_by_uncertainty(&records, cfg.analysis.uncertainty_bin_width, cfg.analysis.min_count)?;
    let report = UncertaintyErrorReport {
        config_hash: cfg.hash(),
        spearman: binned_trend(&bins),
        sample_count: records.len(),
        bins,
    };
    write_text(
        &out_dir.join("uncertainty_error.csv"),
        &xy_count_csv(report.bins.iter().map(|b| (b.bin_lower, b.mean_min_fde_1, b.count))),
    )?;
    write_json(&out_dir.join("uncertainty_error.json"), &report)?;
    if with_svg {
        let pts: Vec<(f64, f64)> = report.bins.iter().map(|b| (b.bin_lower, b.mean_min_fde_1)).collect();
        write_text(
            &out_dir.join("uncertainty_error.svg"),
            &svg::line_chart(&pts, "minFDE_1 vs uncertainty", "U bin (m^2)", "mean minFDE_1 (m)"),
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub config_hash: String,
    pub quantity: String,
    pub histogram: Histogram,
}

fn write_histogram(out_dir: &Path, stem: &str, report: &HistogramReport) -> Result<()> {
    write_text(
        &out_dir.join(format!("{stem}.csv")),
        &xy_count_csv(report.histogram.bins.iter().map(|b| (b.lower, b.fraction, b.count))),
    )?;
    write_json(&out_dir.join(format!("{stem}.json")), report)
}

/// Perception noise per scene (`noise.csv`) and its histogram. Scenes the
/// filter cannot process are skipped with a warning.
pub fn analysis_noise_report(scenes: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<HistogramReport> {
    let samples = read_samples(scenes)?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("no scenes"));
    }
    let noise: Vec<(String, Result<f64>)> = samples
        .par_iter()
        .map(|s| (s.id.clone(), sample_noise(s, &cfg.kalman)))
        .collect();
    let mut csv = String::from("sample_id,noise_m\n");
    let mut values = Vec::with_capacity(noise.len());
    for (id, n) in noise {
        match n {
            Ok(v) => {
                let _ = writeln!(csv, "{id},{v}");
                values.push(v);
            }
            Err(e) => log::warn!("scene {id}: {e}"),
        }
    }
    let histogram = Histogram::from_values(&values, cfg.analysis.noise_bin_width)
        .ok_or(Error::EmptyInput("no scene could be filtered"))?;
    write_text(&out_dir.join("noise.csv"), &csv)?;
    let report = HistogramReport {
        config_hash: cfg.hash(),
        quantity: "perception_noise_m".into(),
        histogram,
    };
    write_histogram(out_dir, "noise_histogram", &report)?;
    Ok(report)
}

pub fn analysis_speed_report(scenes: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<HistogramReport> {
    let samples = read_samples(scenes)?;
    let report = HistogramReport {
        config_hash: cfg.hash(),
        quantity: "average_speed_mps".into(),
        histogram: speed_histogram(&samples, cfg.analysis.speed_bin_width)?,
    };
    write_histogram(out_dir, "speed_histogram", &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// cross-dataset evaluation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub tag: String,
    pub heatmaps: PathBuf,
    pub ground_truth: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedSource {
    pub heatmaps: PathBuf,
    pub ground_truth: PathBuf,
    #[serde(default)]
    pub weight: Option<f64>,
}

/// How a matrix row gets its sampling radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    /// Calibration model file.
    Calibration(PathBuf),
    FixedRadius(f64),
    /// Calibrate during the run on these training heatmaps.
    Train { heatmaps: PathBuf, ground_truth: PathBuf },
    /// Calibrate on `count` cases drawn from several sources, each source
    /// picked with probability proportional to its weight (equal by default).
    Mixed { sources: Vec<MixedSource>, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub tag: String,
    #[serde(flatten)]
    pub source: ModelSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub models: Vec<ModelSpec>,
    pub test_sets: Vec<DataSource>,
    /// Overrides the run config's sampling section.
    #[serde(default)]
    pub sampling: Option<SamplingConfig>,
    /// Fixed radius for the improvement baseline; defaults to each model's
    /// best fixed radius when known, else 1.5 m.
    #[serde(default)]
    pub baseline_radius: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_BASELINE_RADIUS: f64 = 1.5;

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text)?;
        m.validate_shape()?;
        Ok(m)
    }

    /// Reads a manifest and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut m = Self::from_json(&read_text(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.resolve_paths(base);
        Ok(m)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.models.is_empty() || self.test_sets.is_empty() {
            return Err(Error::InvalidConfig("manifest needs at least one model and one test set".into()));
        }
        let unique = |tags: Vec<&String>, what: &str| {
            let set: HashSet<_> = tags.iter().collect();
            if set.len() != tags.len() {
                Err(Error::InvalidConfig(format!("duplicate {what} tag")))
            } else {
                Ok(())
            }
        };
        unique(self.models.iter().map(|m| &m.tag).collect(), "model")?;
        unique(self.test_sets.iter().map(|t| &t.tag).collect(), "test set")?;
        for m in &self.models {
            match &m.source {
                ModelSource::FixedRadius(r) if !(*r > 0.0 && r.is_finite()) => {
                    return Err(Error::InvalidConfig(format!("model {}: fixed radius must be positive", m.tag)));
                }
                ModelSource::Mixed { sources, count } => {
                    if sources.is_empty() || *count == 0 {
                        return Err(Error::InvalidConfig(format!("model {}: empty mixture", m.tag)));
                    }
                    if sources.iter().any(|s| s.weight.is_some_and(|w| !(w > 0.0 && w.is_finite()))) {
                        return Err(Error::InvalidConfig(format!("model {}: weights must be positive", m.tag)));
                    }
                }
                _ => {}
            }
        }
        if let Some(r) = self.baseline_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidConfig("baseline_radius must be positive".into()));
            }
        }
        if let Some(s) = &self.sampling {
            s.validate()?;
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for m in &mut self.models {
            match &mut m.source {
                ModelSource::Calibration(p) => fix(p),
                ModelSource::Train { heatmaps, ground_truth } => {
                    fix(heatmaps);
                    fix(ground_truth);
                }
                ModelSource::Mixed { sources, .. } => {
                    for s in sources {
                        fix(&mut s.heatmaps);
                        fix(&mut s.ground_truth);
                    }
                }
                ModelSource::FixedRadius(_) => {}
            }
        }
        for t in &mut self.test_sets {
            fix(&mut t.heatmaps);
            fix(&mut t.ground_truth);
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    /// Every referenced input path, for the existence check at run start.
    pub fn input_paths(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        for m in &self.models {
            match &m.source {
                ModelSource::Calibration(p) => out.push(p),
                ModelSource::Train { heatmaps, ground_truth } => {
                    out.push(heatmaps);
                    out.push(ground_truth);
                }
                ModelSource::Mixed { sources, .. } => {
                    for s in sources {
                        out.push(&s.heatmaps);
                        out.push(&s.ground_truth);
                    }
                }
                ModelSource::FixedRadius(_) => {}
            }
        }
        for t in &self.test_sets {
            out.push(&t.heatmaps);
            out.push(&t.ground_truth);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatrixCell {
    Ok {
        count: usize,
        min_fde: f64,
        miss_rate: f64,
        baseline_min_fde: f64,
        /// `(baseline - min_fde) / baseline`; positive means the model's
        /// radius beats the fixed baseline.
        improvement: f64,
    },
    Failed {
        error: String,
    },
}

impl MatrixCell {
    pub fn is_ok(&self) -> bool {
        matches!(self, MatrixCell::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub tag: String,
    pub radius: RadiusMode,
    pub baseline_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMetadata {
    pub config_hash: String,
    pub manifest_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Number of top-ranked endpoints the metrics use.
    pub l: usize,
    pub models: Vec<Option<MatrixRow>>,
    pub cells: Vec<Vec<MatrixCell>>,
    pub metadata: MatrixMetadata,
}

impl ReportMatrix {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| !c.is_ok()).count()
    }

    pub fn total_cells(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn cell(&self, row: &str, col: &str) -> Option<&MatrixCell> {
        let i = self.rows.iter().position(|r| r == row)?;
        let j = self.cols.iter().position(|c| c == col)?;
        Some(&self.cells[i][j])
    }

    fn values(&self, f: impl Fn(&MatrixCell) -> Option<f64>) -> Vec<Vec<Option<f64>>> {
        self.cells.iter().map(|row| row.iter().map(&f).collect()).collect()
    }

    fn csv(&self, f: impl Fn(&MatrixCell) -> Option<f64>) -> String {
        let mut out = String::from("train\\test");
        for c in &self.cols {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for (tag, row) in self.rows.iter().zip(self.values(f)) {
            out.push_str(tag);
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(out, ",{v}");
                    }
                    None => out.push_str(",failed"),
                }
            }
            out.push('\n');
        }
        out
    }

    fn markdown_table(&self, title: &str, f: impl Fn(&MatrixCell) -> Option<f64>) -> String {
        let mut out = format!("### {title}\n\n| train \\ test |");
        for c in &self.cols {
            let _ = write!(out, " {c} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(self.cols.len()));
        out.push('\n');
        for (tag, row) in self.rows.iter().zip(self.values(f)) {
            let _ = write!(out, "| {tag} |");
            for v in row {
                match v {
                    Some(v) => {
                        let _ = write!(out, " {v:.3} |");
                    }
                    None => out.push_str(" failed |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn min_fde_of(c: &MatrixCell) -> Option<f64> {
    match c {
        MatrixCell::Ok { min_fde, .. } => Some(*min_fde),
        MatrixCell::Failed { .. } => None,
    }
}

fn miss_rate_of(c: &MatrixCell) -> Option<f64> {
    match c {
        MatrixCell::Ok { miss_rate, .. } => Some(*miss_rate),
        MatrixCell::Failed { .. } => None,
    }
}

fn improvement_of(c: &MatrixCell) -> Option<f64> {
    match c {
        MatrixCell::Ok { improvement, .. } => Some(*improvement),
        MatrixCell::Failed { .. } => None,
    }
}

fn load_mixture(sources: &[MixedSource], count: usize, seed: u64) -> Result<Vec<(Heatmap, Point2)>> {
    let loaded = sources
        .iter()
        .map(|s| load_pairs(&s.heatmaps, &s.ground_truth))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = sources.iter().map(|s| s.weight.unwrap_or(1.0)).collect();
    let total: f64 = weights.iter().sum();
    Ok((0..count as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let pick = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let src = weights
                .iter()
                .position(|w| {
                    acc += w;
                    pick < acc
                })
                .unwrap_or(weights.len() - 1);
            let pool = &loaded[src];
            let p = &pool[rng.random_range(0..pool.len())];
            (p.heatmap.clone(), p.gt)
        })
        .collect())
}

fn resolve_model(
    spec: &ModelSpec,
    manifest: &RunManifest,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<MatrixRow> {
    let calibrated = |dataset: Vec<(Heatmap, Point2)>| -> Result<CalibrationModel> {
        let fit = calibrate(&dataset, &cfg.calibration, &spec.tag)?;
        write_json(&out_dir.join("models").join(format!("{}.json", spec.tag)), &fit.model)?;
        Ok(fit.model)
    };
    let model = match &spec.source {
        ModelSource::FixedRadius(r) => {
            return Ok(MatrixRow {
                tag: spec.tag.clone(),
                radius: RadiusMode::Fixed(*r),
                baseline_radius: manifest.baseline_radius.unwrap_or(*r),
            })
        }
        ModelSource::Calibration(path) => load_calibration(path)?,
        ModelSource::Train { heatmaps, ground_truth } => calibrated(
            load_pairs(heatmaps, ground_truth)?
                .into_iter()
                .map(|p| (p.heatmap, p.gt))
                .collect(),
        )?,
        ModelSource::Mixed { sources, count } => calibrated(load_mixture(sources, *count, cfg.seed)?)?,
    };
    let baseline_radius = manifest
        .baseline_radius
        .or(model.fixed_radius)
        .unwrap_or(DEFAULT_BASELINE_RADIUS);
    Ok(MatrixRow {
        tag: spec.tag.clone(),
        radius: RadiusMode::Adaptive(model),
        baseline_radius,
    })
}

/// Evaluates one model against one test set, exactly as `cmd_evaluate`
/// would with the model's radius.
pub fn evaluate_cell(row: &MatrixRow, pairs: &[Paired], sampling: &SamplingConfig) -> Result<MatrixCell> {
    let cfg = sampling.with_radius(row.radius.clone());
    let (_, report) = evaluate_and_aggregate(pairs, &cfg)?;
    let l = cfg.k;
    let baseline = match &row.radius {
        RadiusMode::Fixed(r) if *r == row.baseline_radius => report.min_fde(l),
        _ => evaluate_and_aggregate(pairs, &sampling.with_radius(RadiusMode::Fixed(row.baseline_radius)))?
            .1
            .min_fde(l),
    };
    let improvement = if baseline > 0.0 {
        (baseline - report.min_fde(l)) / baseline
    } else {
        0.0
    };
    Ok(MatrixCell::Ok {
        count: report.count,
        min_fde: report.min_fde(l),
        miss_rate: report.miss_rate(l),
        baseline_min_fde: baseline,
        improvement,
    })
}

/// Runs every (model, test set) cell. Failures are recorded in the matrix
/// rather than aborting the run; only an unusable manifest is an error.
pub fn cmd_cross_eval(manifest: &RunManifest, cfg: &RunConfig, out_dir: &Path, with_svg: bool) -> Result<ReportMatrix> {
    let missing: Vec<String> = manifest
        .input_paths()
        .into_iter()
        .filter(|p| !p.exists())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidConfig(format!("manifest references missing files: {}", missing.join(", "))));
    }
    let sampling = manifest.sampling.clone().unwrap_or_else(|| cfg.sampling.clone());
    sampling.validate()?;

    let test_sets: Vec<Result<Vec<Paired>>> = manifest
        .test_sets
        .iter()
        .map(|t| load_pairs(&t.heatmaps, &t.ground_truth))
        .collect();

    let mut models = Vec::with_capacity(manifest.models.len());
    let mut cells = Vec::with_capacity(manifest.models.len());
    for spec in &manifest.models {
        let row = resolve_model(spec, manifest, cfg, out_dir);
        let row_cells = manifest
            .test_sets
            .iter()
            .zip(&test_sets)
            .map(|(t, pairs)| {
                let result = match (&row, pairs) {
                    (Err(e), _) => Err(format!("model {}: {e}", spec.tag)),
                    (_, Err(e)) => Err(format!("test set {}: {e}", t.tag)),
                    (Ok(row), Ok(pairs)) => evaluate_cell(row, pairs, &sampling).map_err(|e| e.to_string()),
                };
                result.unwrap_or_else(|error| {
                    log::warn!("cell ({}, {}) failed: {error}", spec.tag, t.tag);
                    MatrixCell::Failed { error }
                })
            })
            .collect();
        cells.push(row_cells);
        models.push(row.ok());
    }

    let matrix = ReportMatrix {
        rows: manifest.models.iter().map(|m| m.tag.clone()).collect(),
        cols: manifest.test_sets.iter().map(|t| t.tag.clone()).collect(),
        l: sampling.k,
        models,
        cells,
        metadata: MatrixMetadata {
            config_hash: cfg.hash(),
            manifest_hash: content_hash(manifest),
        },
    };
    write_matrix(&matrix, out_dir, with_svg)?;
    Ok(matrix)
}

fn write_matrix(m: &ReportMatrix, out_dir: &Path, with_svg: bool) -> Result<()> {
    write_json(&out_dir.join("cross_eval.json"), m)?;
    write_text(&out_dir.join("min_fde_matrix.csv"), &m.csv(min_fde_of))?;
    write_text(&out_dir.join("miss_rate_matrix.csv"), &m.csv(miss_rate_of))?;
    write_text(&out_dir.join("improvement_matrix.csv"), &m.csv(improvement_of))?;
    let l = m.l;
    let md = [
        format!("# Cross-dataset evaluation\n\nRows: dataset the radius was calibrated on. Columns: evaluation dataset.\n"),
        m.markdown_table(&format!("minFDE_{l} (m)"), min_fde_of),
        m.markdown_table(&format!("MR_{l}"), miss_rate_of),
        m.markdown_table(&format!("relative minFDE_{l} improvement over fixed radius"), improvement_of),
    ]
    .join("\n");
    write_text(&out_dir.join("cross_eval.md"), &md)?;
    if with_svg {
        for (name, title, f) in [
            ("min_fde_matrix.svg", format!("minFDE_{l}"), min_fde_of as fn(&MatrixCell) -> Option<f64>),
            ("miss_rate_matrix.svg", format!("MR_{l}"), miss_rate_of),
            ("improvement_matrix.svg", "improvement over fixed radius".to_owned(), improvement_of),
        ] {
            write_text(&out_dir.join(name), &svg::matrix_chart(&title, &m.rows, &m.cols, &m.values(f)))?;
        }
    }
    Ok(())
}
