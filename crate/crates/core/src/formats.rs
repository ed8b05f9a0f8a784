//! Exchange formats: scene, heatmap, ground-truth and prediction JSON Lines,
//! the per-sample evaluation CSV, and helpers for reading them with
//! file/line context.
//!
//! Every `parse_*` function takes untrusted text and either returns a
//! validated value or an error; none of them panic.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::heatmap::{normalize, GridSpec, Heatmap};
use crate::metrics::EvalRecord;
use crate::sampling::{Endpoint, PredictionSet};
use crate::trajectory::Sample;
use crate::{Error, Point2, Result};

/// Scene format: one [`Sample`] per line.
pub fn parse_sample_line(line: &str) -> Result<Sample> {
    Ok(serde_json::from_str(line)?)
}

pub fn sample_to_line(s: &Sample) -> String {
    serde_json::to_string(s).expect("samples always serialize")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatmapWire {
    sample_id: String,
    grid: GridSpec,
    cells: Vec<(u64, f64)>,
}

/// A heatmap with the id of the sample it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapRecord {
    pub sample_id: String,
    pub heatmap: Heatmap,
}

/// Parses one heatmap object and normalizes its mass.
pub fn parse_heatmap_line(line: &str) -> Result<HeatmapRecord> {
    let wire: HeatmapWire = serde_json::from_str(line)?;
    let raw = Heatmap::from_cells(wire.grid, wire.cells)?;
    Ok(HeatmapRecord {
        sample_id: wire.sample_id,
        heatmap: normalize(&raw)?,
    })
}

pub fn heatmap_to_line(sample_id: &str, h: &Heatmap) -> String {
    let wire = HeatmapWire {
        sample_id: sample_id.to_owned(),
        grid: *h.grid(),
        cells: h.cells().to_vec(),
    };
    serde_json::to_string(&wire).expect("heatmaps always serialize")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub sample_id: String,
    pub gt: Point2,
}

pub fn parse_ground_truth_line(line: &str) -> Result<GroundTruthRecord> {
    let rec: GroundTruthRecord = serde_json::from_str(line)?;
    if !(rec.gt[0].is_finite() && rec.gt[1].is_finite()) {
        return Err(Error::Malformed(format!("{}: non-finite ground truth", rec.sample_id)));
    }
    Ok(rec)
}

pub fn ground_truth_to_line(sample_id: &str, gt: Point2) -> String {
    serde_json::to_string(&GroundTruthRecord {
        sample_id: sample_id.to_owned(),
        gt,
    })
    .expect("ground truth always serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionWire {
    sample_id: String,
    radius_used: f64,
    uncertainty: Option<f64>,
    endpoints: Vec<Endpoint>,
}

/// Prediction set as stored on disk: the expectation is not kept, only `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub radius_used: f64,
    pub uncertainty: Option<f64>,
    pub endpoints: Vec<Endpoint>,
}

impl PredictionRecord {
    pub fn from_set(sample_id: &str, set: &PredictionSet) -> Self {
        Self {
            sample_id: sample_id.to_owned(),
            radius_used: set.radius_used,
            uncertainty: set.uncertainty.map(|u| u.u),
            endpoints: set.endpoints.clone(),
        }
    }

    /// Prediction set without the expectation, which the file does not carry.
    pub fn to_set(&self) -> PredictionSet {
        PredictionSet {
            endpoints: self.endpoints.clone(),
            radius_used: self.radius_used,
            uncertainty: None,
        }
    }
}

const SCORE_SLACK: f64 = 1e-6;

pub fn parse_prediction_line(line: &str) -> Result<PredictionRecord> {
    let w: PredictionWire = serde_json::from_str(line)?;
    if !(w.radius_used > 0.0 && w.radius_used.is_finite()) {
        return Err(Error::Malformed(format!("{}: radius_used must be positive", w.sample_id)));
    }
    if let Some(u) = w.uncertainty {
        if !(u >= 0.0 && u.is_finite()) {
            return Err(Error::Malformed(format!("{}: uncertainty must be >= 0", w.sample_id)));
        }
    }
    for e in &w.endpoints {
        if !(e.x.is_finite() && e.y.is_finite()) {
            return Err(Error::Malformed(format!("{}: non-finite endpoint", w.sample_id)));
        }
        if !(e.score >= 0.0 && e.score <= 1.0 + SCORE_SLACK) {
            return Err(Error::Malformed(format!("{}: score {} outside [0, 1]", w.sample_id, e.score)));
        }
    }
    if w.endpoints.windows(2).any(|p| p[1].score > p[0].score) {
        return Err(Error::Malformed(format!("{}: scores must be non-increasing", w.sample_id)));
    }
    let total: f64 = w.endpoints.iter().map(|e| e.score).sum();
    if total > 1.0 + SCORE_SLACK {
        return Err(Error::Malformed(format!("{}: scores sum to {total}", w.sample_id)));
    }
    Ok(PredictionRecord {
        sample_id: w.sample_id,
        radius_used: w.radius_used,
        uncertainty: w.uncertainty,
        endpoints: w.endpoints,
    })
}

pub fn prediction_to_line(rec: &PredictionRecord) -> String {
    serde_json::to_string(&PredictionWire {
        sample_id: rec.sample_id.clone(),
        radius_used: rec.radius_used,
        uncertainty: rec.uncertainty,
        endpoints: rec.endpoints.clone(),
    })
    .expect("predictions always serialize")
}

/// Non-blank lines of a text file with their 1-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_owned()))
        .collect())
}

/// Parses every non-blank line, failing on the first bad one.
pub fn read_jsonl<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            parse(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn read_heatmaps(path: &Path) -> Result<Vec<HeatmapRecord>> {
    read_jsonl(path, parse_heatmap_line)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthRecord>> {
    read_jsonl(path, parse_ground_truth_line)
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    read_jsonl(path, parse_sample_line)
}

/// Writes `lines`, each followed by a newline, creating parent directories.
pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{}", line.as_ref()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(PathBuf::from(path), e))
}

/// Evaluation records as CSV: `sample_id, uncertainty, radius_used,
/// fde_1..fde_k, miss_1..miss_k`, misses written as 0/1.
pub fn write_eval_csv<W: Write>(out: W, records: &[EvalRecord]) -> Result<()> {
    let k = records.first().map_or(6, EvalRecord::k);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["sample_id".to_owned(), "uncertainty".into(), "radius_used".into()];
    header.extend((1..=k).map(|l| format!("fde_{l}")));
    header.extend((1..=k).map(|l| format!("miss_{l}")));
    w.write_record(&header)?;
    for r in records {
        if r.k() != k || r.miss_per_l.len() != k {
            return Err(Error::Malformed(format!("record {} has a different l count", r.sample_id)));
        }
        let mut row = vec![r.sample_id.clone(), r.uncertainty.to_string(), r.radius_used.to_string()];
        row.extend(r.fde_per_l.iter().map(f64::to_string));
        row.extend(r.miss_per_l.iter().map(|&m| if m { "1" } else { "0" }.to_owned()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::Malformed(e.to_string()))?;
    Ok(())
}

pub fn eval_csv_string(records: &[EvalRecord]) -> Result<String> {
    let mut buf = Vec::new();
    write_eval_csv(&mut buf, records)?;
    String::from_utf8(buf).map_err(|e| Error::Malformed(e.to_string()))
}

fn parse_bool_cell(s: &str) -> Option<bool> {
    match s.trim() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

/// Reads the evaluation CSV written by [`write_eval_csv`].
pub fn read_eval_csv<R: Read>(input: R) -> Result<Vec<EvalRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 5 || cols[..3] != ["sample_id", "uncertainty", "radius_used"] {
        return Err(Error::Malformed("unexpected evaluation CSV header".into()));
    }
    let k = (cols.len() - 3) / 2;
    let expected: Vec<String> = (1..=k)
        .map(|l| format!("fde_{l}"))
        .chain((1..=k).map(|l| format!("miss_{l}")))
        .collect();
    if cols.len() != 3 + 2 * k || cols[3..].iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(Error::Malformed("evaluation CSV needs fde_1..fde_k then miss_1..miss_k".into()));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Malformed(format!("row {}: bad {what}", i + 1));
        let num = |j: usize| -> Option<f64> { row.get(j)?.trim().parse().ok() };
        let fde_per_l = (0..k)
            .map(|l| num(3 + l).filter(|v| *v >= 0.0 && v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("fde value"))?;
        let miss_per_l = (0..k)
            .map(|l| row.get(3 + k + l).and_then(parse_bool_cell))
            .collect::<Option<Vec<bool>>>()
            .ok_or_else(|| bad("miss flag"))?;
        out.push(EvalRecord {
            sample_id: row.get(0).ok_or_else(|| bad("sample_id"))?.to_owned(),
            uncertainty: num(1).ok_or_else(|| bad("uncertainty"))?,
            radius_used: num(2).ok_or_else(|| bad("radius_used"))?,
            fde_per_l,
            miss_per_l,
        });
    }
    Ok(out)
}
