//! Evaluation statistics: ROC analysis, KS normality, paired t-tests and
//! mean / standard-deviation summaries.
//!
//! The normality check in [`summarize`] fits the normal's mean and standard
//! deviation to the sample, so its p-value uses the Lilliefors correction
//! (Dallal-Wilkinson approximation). [`ks_statistic`] is the plain
//! one-sample test against a fully specified CDF with the asymptotic
//! Kolmogorov p-value.

mod roc;
mod special;

pub use roc::{auc, roc_curve, youden_threshold, RocCurve, RocPoint, YoudenPoint};
pub use special::{kolmogorov_survival, lilliefors_p, normal_cdf, regularized_incomplete_beta, student_t_two_tailed};

use crate::error::{Error, Result};

/// Default significance level for the normality flag.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_two_tailed: f64,
    pub mean_difference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalityCheck {
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub normal_at_alpha: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std_dev: f64,
    /// `None` when the sample has zero variance and the KS step is skipped.
    pub normality: Option<NormalityCheck>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_variance(xs: &[f64], m: f64) -> f64 {
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Whether the spread is only rounding noise around a constant.
fn is_degenerate(xs: &[f64], var: f64) -> bool {
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    var.sqrt() <= 64.0 * f64::EPSILON * scale
}

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(())
}

/// Paired two-tailed Student's t-test on `d = a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} vs {} paired samples",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: a.len(),
        });
    }
    check_finite(a)?;
    check_finite(b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let md = mean(&d);
    let var = sample_variance(&d, md);
    if is_degenerate(&d, var) {
        return Err(Error::ZeroVariance);
    }
    let t = md / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    Ok(PairedTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_two_tailed: student_t_two_tailed(t, df as f64),
        mean_difference: md,
    })
}

/// One-sample KS statistic against `cdf`, with the asymptotic p-value.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    check_finite(samples)?;
    let statistic = ks_distance(samples, cdf);
    let n = samples.len() as f64;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_survival(n.sqrt() * statistic),
    })
}

fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = cdf(*x).clamp(0.0, 1.0);
            ((i + 1) as f64 / n - f).abs().max((f - i as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Mean, sample standard deviation and a KS normality check against a
/// normal with the sample's own mean and standard deviation.
pub fn summarize(samples: &[f64], alpha: f64) -> Result<StatsSummary> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must be in (0, 1), got {alpha}")));
    }
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    check_finite(samples)?;
    let m = mean(samples);
    let var = sample_variance(samples, m);
    let sd = var.sqrt();
    let normality = if is_degenerate(samples, var) {
        None
    } else {
        let d = ks_distance(samples, |x| normal_cdf((x - m) / sd));
        let p = lilliefors_p(d, samples.len());
        Some(NormalityCheck {
            ks_statistic: d,
            ks_p: p,
            normal_at_alpha: p > alpha,
        })
    };
    Ok(StatsSummary {
        n: samples.len(),
        mean: m,
        std_dev: sd,
        normality,
    })
}
