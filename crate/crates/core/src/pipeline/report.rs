use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::batch::ScoreRow;
use crate::error::{Error, Result};
use crate::stats::{paired_t_test, summarize, PairedTestResult, StatsSummary};

/// Summary of one image set under one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SetRow {
    pub metric: String,
    pub label: String,
    pub n: usize,
    /// Error message when the set is too small to summarize.
    pub summary: std::result::Result<StatsSummary, String>,
}

/// Paired comparison of two sets on their common ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRow {
    pub metric: String,
    pub n: usize,
    /// Paired ids in comparison order.
    pub ids: Vec<String>,
    pub test: std::result::Result<PairedTestResult, String>,
}

impl PairedRow {
    pub fn significant(&self, alpha: f64) -> Option<bool> {
        self.test.as_ref().ok().map(|t| t.p_two_tailed < alpha)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityTable {
    pub alpha: f64,
    pub sets: Vec<SetRow>,
    pub paired: Vec<PairedRow>,
}

/// Scores of one metric on the real and the synthetic image set.
#[derive(Debug, Clone)]
pub struct MetricScores {
    pub metric: String,
    pub real: Vec<ScoreRow>,
    pub synthetic: Vec<ScoreRow>,
}

fn scored(rows: &[ScoreRow]) -> Vec<(&str, f64)> {
    rows.iter()
        .filter_map(|r| r.score.map(|s| (r.id.as_str(), s)))
        .collect()
}

fn set_row(metric: &str, label: &str, values: &[f64], alpha: f64) -> SetRow {
    SetRow {
        metric: metric.into(),
        label: label.into(),
        n: values.len(),
        summary: summarize(values, alpha).map_err(|e| e.to_string()),
    }
}

/// Per-set summaries and a paired t-test (real minus synthetic) on the ids
/// scored in both sets.
pub fn compare_report(metrics: &[MetricScores], alpha: f64) -> Result<QualityTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let mut sets = Vec::new();
    let mut paired = Vec::new();
    for m in metrics {
        let real = scored(&m.real);
        let synthetic = scored(&m.synthetic);
        let lookup: HashMap<&str, f64> = synthetic.iter().copied().collect();
        if lookup.len() != synthetic.len()
            || real.iter().map(|r| r.0).collect::<std::collections::HashSet<_>>().len() != real.len()
        {
            return Err(Error::Csv(format!("{}: duplicate ids in score table", m.metric)));
        }
        let pairs: Vec<(&str, f64, f64)> = real
            .iter()
            .filter_map(|(id, a)| lookup.get(id).map(|b| (*id, *a, *b)))
            .collect();
        if pairs.is_empty() {
            return Err(Error::EmptyIntersection(format!(
                "{}: real and synthetic scores share no id",
                m.metric
            )));
        }
        let a: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.2).collect();
        sets.push(set_row(
            &m.metric,
            "real",
            &real.iter().map(|r| r.1).collect::<Vec<_>>(),
            alpha,
        ));
        sets.push(set_row(
            &m.metric,
            "synthetic",
            &synthetic.iter().map(|r| r.1).collect::<Vec<_>>(),
            alpha,
        ));
        paired.push(PairedRow {
            metric: m.metric.clone(),
            n: pairs.len(),
            ids: pairs.iter().map(|p| p.0.to_string()).collect(),
            test: paired_t_test(&a, &b).map_err(|e| e.to_string()),
        });
    }
    Ok(QualityTable { alpha, sets, paired })
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl QualityTable {
    /// Aligned plain-text rendering: one block of set summaries, one of
    /// paired tests.
    pub fn render_text(&self) -> String {
        let mut rows = vec![vec![
            "metric".to_string(),
            "set".into(),
            "n".into(),
            "mean ± sd".into(),
            format!("normal (KS, alpha={})", self.alpha),
        ]];
        for s in &self.sets {
            let (stat, normal) = match &s.summary {
                Ok(sum) => (
                    format!("{:.4} ± {:.4}", sum.mean, sum.std_dev),
                    sum.normality.map_or("n/a (zero variance)".to_string(), |c| {
                        format!("{} (p={:.3})", yes_no(c.normal_at_alpha), c.ks_p)
                    }),
                ),
                Err(e) => (format!("error: {e}"), String::new()),
            };
            rows.push(vec![s.metric.clone(), s.label.clone(), s.n.to_string(), stat, normal]);
        }
        let mut out = align(&rows);
        out.push('\n');
        let mut rows = vec![vec![
            "metric".to_string(),
            "pairs".into(),
            "t".into(),
            "df".into(),
            "p (two-tailed)".into(),
            "significant".into(),
        ]];
        for p in &self.paired {
            match &p.test {
                Ok(t) => rows.push(vec![
                    p.metric.clone(),
                    p.n.to_string(),
                    format!("{:.4}", t.t_statistic),
                    t.degrees_of_freedom.to_string(),
                    format!("{:.4e}", t.p_two_tailed),
                    yes_no(t.p_two_tailed < self.alpha).into(),
                ]),
                Err(e) => rows.push(vec![
                    p.metric.clone(),
                    p.n.to_string(),
                    format!("error: {e}"),
                    String::new(),
                    String::new(),
                    String::new(),
                ]),
            }
        }
        out.push_str(&align(&rows));
        out
    }

    /// Long-format CSV with one row per set summary and per paired test.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Csv(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(csv_err)?;
        w.write_record([
            "kind",
            "metric",
            "set",
            "n",
            "mean",
            "std",
            "ks_statistic",
            "ks_p",
            "normal",
            "t",
            "df",
            "p_two_tailed",
            "significant",
            "alpha",
            "error",
        ])
        .map_err(csv_err)?;
        let alpha = self.alpha.to_string();
        for s in &self.sets {
            let mut rec = vec![String::new(); 15];
            rec[0] = "set".into();
            rec[1] = s.metric.clone();
            rec[2] = s.label.clone();
            rec[3] = s.n.to_string();
            rec[13] = alpha.clone();
            match &s.summary {
                Ok(sum) => {
                    rec[4] = sum.mean.to_string();
                    rec[5] = sum.std_dev.to_string();
                    if let Some(c) = sum.normality {
                        rec[6] = c.ks_statistic.to_string();
                        rec[7] = c.ks_p.to_string();
                        rec[8] = c.normal_at_alpha.to_string();
                    }
                }
                Err(e) => rec[14] = e.clone(),
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        for p in &self.paired {
            let mut rec = vec![String::new(); 15];
            rec[0] = "paired".into();
            rec[1] = p.metric.clone();
            rec[2] = "real-synthetic".into();
            rec[3] = p.n.to_string();
            rec[13] = alpha.clone();
            match &p.test {
                Ok(t) => {
                    rec[4] = t.mean_difference.to_string();
                    rec[9] = t.t_statistic.to_string();
                    rec[10] = t.degrees_of_freedom.to_string();
                    rec[11] = t.p_two_tailed.to_string();
                    rec[12] = (t.p_two_tailed < self.alpha).to_string();
                }
                Err(e) => rec[14] = e.clone(),
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            let _ = write!(line, "{cell:<width$}  ", width = widths[c]);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
