use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 10.0;
pub const DEFAULT_EPOCHS: usize = 2000;

/// Magnitude of the seeded uniform jitter on the initial weights.
pub const INITIAL_JITTER: f64 = 1e-3;

const BASE_STEP: f64 = 0.5;
const MIN_SLOPE: f64 = 1e-6;

/// Sigmoid mapping `p = 1 / (1 + exp(-(slope * f + intercept)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlattCalibration {
    pub slope: f64,
    pub intercept: f64,
}

impl PlattCalibration {
    pub fn new(slope: f64, intercept: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) || !intercept.is_finite() {
            return Err(Error::invalid("calibration needs a positive finite slope"));
        }
        Ok(Self { slope, intercept })
    }

    pub fn apply(&self, f: f64) -> f64 {
        let z = self.slope * f + self.intercept;
        if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        }
    }
}

/// Linear SVM with a calibrated probability output.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    weights: Vec<f64>,
    bias: f64,
    calibration: PlattCalibration,
}

impl SvmModel {
    pub fn new(weights: Vec<f64>, bias: f64, calibration: PlattCalibration) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::invalid("SVM weights and bias must be finite"));
        }
        Ok(Self {
            weights,
            bias,
            calibration,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn calibration(&self) -> PlattCalibration {
        self.calibration
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Calibrated probability of the positive class.
    pub fn probability(&self, x: &[f64]) -> f64 {
        self.calibration.apply(self.decision(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmTraining {
    pub model: SvmModel,
    /// Regularized objective of the iterate at the start of each epoch, on
    /// the standardized features. Subgradient steps are not monotone.
    pub objective_history: Vec<f64>,
    /// Objective of the best iterate seen so far, per epoch.
    pub best_objective_history: Vec<f64>,
    /// Epoch whose iterate was kept.
    pub best_epoch: usize,
    /// Per-feature mean and scale used for the internal standardization.
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
}

fn objective(w: &[f64], b: f64, zs: &[Vec<f64>], ys: &[f64], c: f64) -> f64 {
    let hinge: f64 = zs
        .iter()
        .zip(ys)
        .map(|(z, y)| (1.0 - y * (dot(w, z) + b)).max(0.0))
        .sum();
    0.5 * dot(w, w) + c * hinge / zs.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `0.5 |w|^2 + C * mean(hinge)` by full-batch subgradient descent
/// with step `0.5 / sqrt(t + 1)`, keeping the best iterate, then fits a
/// Platt sigmoid on the training decision values.
///
/// Features are standardized internally; the returned weights act on the
/// raw inputs.
pub fn svm_train(xs: &[Vec<f64>], labels: &[bool], c_reg: f64, epochs: usize, seed: u64) -> Result<SvmTraining> {
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} examples, {} labels",
            xs.len(),
            labels.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: xs.len(),
        });
    }
    if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
        return Err(Error::SingleClass);
    }
    if !(c_reg > 0.0 && c_reg.is_finite()) || epochs == 0 {
        return Err(Error::invalid("c_reg must be positive and epochs at least 1"));
    }
    let dim = xs[0].len();
    if dim == 0 || xs.iter().any(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch("examples differ in dimension".into()));
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("examples must be finite"));
    }

    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|j| {
            let v = (xs.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
            if v > 1e-12 {
                v
            } else {
                1.0
            }
        })
        .collect();
    let zs: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| (0..dim).map(|j| (x[j] - mean[j]) / sd[j]).collect())
        .collect();
    let ys: Vec<f64> = labels.iter().map(|l| if *l { 1.0 } else { -1.0 }).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Vec<f64> = (0..dim)
        .map(|_| rng.random_range(-INITIAL_JITTER..INITIAL_JITTER))
        .collect();
    let mut b = 0.0;
    let mut history = Vec::with_capacity(epochs);
    let mut best_history = Vec::with_capacity(epochs);
    let (mut best_w, mut best_b, mut best_obj, mut best_epoch) = (w.clone(), b, f64::INFINITY, 0);

    for t in 0..epochs {
        let obj = objective(&w, b, &zs, &ys, c_reg);
        history.push(obj);
        if obj < best_obj {
            best_obj = obj;
            best_w.clone_from(&w);
            best_b = b;
            best_epoch = t;
        }
        best_history.push(best_obj);
        let mut gw = w.clone();
        let mut gb = 0.0;
        for (z, y) in zs.iter().zip(&ys) {
            if y * (dot(&w, z) + b) < 1.0 {
                for (g, v) in gw.iter_mut().zip(z) {
                    *g -= c_reg * y * v / n;
                }
                gb -= c_reg * y / n;
            }
        }
        let step = BASE_STEP / ((t + 1) as f64).sqrt();
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }

    let weights: Vec<f64> = best_w.iter().zip(&sd).map(|(w, s)| w / s).collect();
    let bias = best_b
        - best_w
            .iter()
            .zip(&mean)
            .zip(&sd)
            .map(|((w, m), s)| w * m / s)
            .sum::<f64>();
    let decisions: Vec<f64> = xs.iter().map(|x| dot(&weights, x) + bias).collect();
    let calibration = platt_fit(&decisions, labels);
    Ok(SvmTraining {
        model: SvmModel::new(weights, bias, calibration)?,
        objective_history: history,
        best_objective_history: best_history,
        best_epoch,
        feature_mean: mean,
        feature_scale: sd,
    })
}

/// Platt scaling with the smoothed targets and the Newton / backtracking
/// scheme of Lin, Lin and Weng.
fn platt_fit(f: &[f64], labels: &[bool]) -> PlattCalibration {
    let pos = labels.iter().filter(|l| **l).count() as f64;
    let neg = labels.len() as f64 - pos;
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|l| if *l { hi } else { lo }).collect();

    // parametrized as P(y = 1 | f) = 1 / (1 + exp(a f + b))
    let nll = |a: f64, b: f64| -> f64 {
        f.iter()
            .zip(&t)
            .map(|(fi, ti)| {
                let z = fi * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut a = 0.0;
    let mut b = ((neg + 1.0) / (pos + 1.0)).ln();
    let mut fval = nll(a, b);
    for _ in 0..100 {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
        for (fi, ti) in f.iter().zip(&t) {
            let z = fi * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += fi * fi * d2;
            h22 += d2;
            h21 += fi * d2;
            let d1 = ti - p;
            g1 += fi * d1;
            g2 += d1;
        }
        if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = nll(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < 1e-10 {
            break;
        }
    }
    PlattCalibration {
        slope: (-a).max(MIN_SLOPE),
        intercept: -b,
    }
}
