use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::isc::IscModel;
use crate::qv::{qv_score_masked, DEFAULT_WINDOW};
use crate::raster::{detect_fov, load_image, DEFAULT_FOV_THRESHOLD};
use crate::vesselness::FrangiParams;

/// Which image of an entry gets scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageRole {
    Retina,
    Synthetic,
}

pub enum Metric<'a> {
    Qv { params: FrangiParams, window: usize },
    Isc(&'a IscModel),
}

impl Metric<'_> {
    pub fn qv_default() -> Self {
        Metric::Qv {
            params: FrangiParams::default(),
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchOptions {
    /// Ids dropped in addition to entries flagged as excluded.
    pub exclude: HashSet<String>,
    /// Score entries flagged as excluded as well.
    pub include_excluded: bool,
}

/// One output row. Exactly one of `score` and `error` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub score: Option<f64>,
    pub vessel_pixel_count: Option<usize>,
    pub error: Option<String>,
}

/// Reads one id per line; blank lines and `#` comments are ignored.
pub fn read_id_list(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let id = line.trim();
        if !id.is_empty() && !id.starts_with('#') {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

fn score_path(path: &Path, metric: &Metric) -> Result<(f64, Option<usize>)> {
    let img = load_image(path)?;
    let mask = detect_fov(&img, DEFAULT_FOV_THRESHOLD)?;
    match metric {
        Metric::Qv { params, window } => {
            let r = qv_score_masked(&img, &mask, params, *window)?;
            Ok((r.score, Some(r.vessel_pixel_count)))
        }
        Metric::Isc(model) => Ok((model.score(&img, &mask)?, None)),
    }
}

fn row(id: &str, outcome: Result<(f64, Option<usize>)>) -> ScoreRow {
    match outcome {
        Ok((score, count)) => ScoreRow {
            id: id.to_string(),
            score: Some(score),
            vessel_pixel_count: count,
            error: None,
        },
        Err(err) => ScoreRow {
            id: id.to_string(),
            score: None,
            vessel_pixel_count: None,
            error: Some(err.to_string()),
        },
    }
}

/// Scores `(id, path)` items in order, one row each.
pub fn score_paths(items: &[(String, PathBuf)], metric: &Metric) -> Vec<ScoreRow> {
    items
        .par_iter()
        .map(|(id, path)| row(id, score_path(path, metric)))
        .collect()
}

/// Scores the selected entries in manifest order; a failing entry yields a
/// row with its error instead of aborting the batch.
pub fn score_batch(manifest: &DatasetManifest, metric: &Metric, role: ImageRole, opts: &BatchOptions) -> Vec<ScoreRow> {
    let selected: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| opts.include_excluded || !e.excluded)
        .filter(|e| !opts.exclude.contains(&e.id))
        .collect();
    selected
        .par_iter()
        .map(|e| {
            let path = match role {
                ImageRole::Retina => Ok(&e.retina_path),
                ImageRole::Synthetic => e
                    .synthetic_path
                    .as_ref()
                    .ok_or_else(|| Error::invalid(format!("`{}` has no synthetic image", e.id))),
            };
            row(&e.id, path.and_then(|p| score_path(p, metric)))
        })
        .collect()
}

pub const SCORE_HEADER: [&str; 4] = ["id", "score", "vessel_pixel_count", "error"];

/// Writes `id,score,vessel_pixel_count,error` with shortest round-trip floats.
pub fn write_scores_csv(rows: &[ScoreRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Csv(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(SCORE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.score.map(|s| s.to_string()).unwrap_or_default(),
            r.vessel_pixel_count.map(|c| c.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let bad = |msg: String| Error::Csv(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| bad("missing `id` column".into()))?;
    let score_col = col("score").ok_or_else(|| bad("missing `score` column".into()))?;
    let (count_col, error_col) = (col("vessel_pixel_count"), col("error"));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |c: Option<usize>| c.and_then(|c| record.get(c)).filter(|s| !s.is_empty());
        let id = field(Some(id_col))
            .ok_or_else(|| bad("row without id".into()))?
            .to_string();
        let score = field(Some(score_col))
            .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad score `{s}` for `{id}`"))))
            .transpose()?;
        let vessel_pixel_count = field(count_col)
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| bad(format!("bad count `{s}` for `{id}`")))
            })
            .transpose()?;
        rows.push(ScoreRow {
            id,
            score,
            vessel_pixel_count,
            error: field(error_col).map(str::to_string),
        });
    }
    Ok(rows)
}

/// Reads a score column and a binary label column (`0`/`1`, `true`/`false`)
/// from a headed CSV.
pub fn read_labeled_scores(path: impl AsRef<Path>, score_col: &str, label_col: &str) -> Result<(Vec<f64>, Vec<bool>)> {
    let path = path.as_ref();
    let bad = |msg: String| Error::Csv(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing `{name}` column")))
    };
    let (sc, lc) = (col(score_col)?, col(label_col)?);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (n, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let s = record.get(sc).unwrap_or("").trim();
        let l = record.get(lc).unwrap_or("").trim();
        scores.push(
            s.parse::<f64>()
                .map_err(|_| bad(format!("row {}: bad score `{s}`", n + 2)))?,
        );
        labels.push(match l {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad(format!("row {}: bad label `{l}`", n + 2))),
        });
    }
    Ok((scores, labels))
}
