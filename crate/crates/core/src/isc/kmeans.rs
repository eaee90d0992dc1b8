use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::FeatureMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Relative slack allowed when checking that inertia never increases; it
/// only absorbs summation-order rounding.
pub const INERTIA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    k: usize,
    feature_dim: usize,
    centers: Vec<f64>,
    feature_config_fingerprint: u64,
}

impl ClusterModel {
    /// `centers` is row-major, `k x feature_dim`.
    pub fn new(k: usize, feature_dim: usize, centers: Vec<f64>, feature_config_fingerprint: u64) -> Result<Self> {
        if k < 2 || feature_dim == 0 {
            return Err(Error::invalid("cluster model needs k >= 2 and a positive dimension"));
        }
        if centers.len() != k * feature_dim {
            return Err(Error::DimensionMismatch(format!(
                "{k} centers of dimension {feature_dim} need {} values, got {}",
                k * feature_dim,
                centers.len()
            )));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cluster centers must be finite"));
        }
        Ok(Self {
            k,
            feature_dim,
            centers,
            feature_config_fingerprint,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j * self.feature_dim..(j + 1) * self.feature_dim]
    }

    pub fn feature_config_fingerprint(&self) -> u64 {
        self.feature_config_fingerprint
    }

    /// Nearest center by Euclidean distance, ties to the lowest index,
    /// with the squared distance.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centers, self.feature_dim, x)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: ClusterModel,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Empty clusters re-seeded over the whole run.
    pub repairs: usize,
}

fn assign(features: &FeatureMatrix, centers: &[f64], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let dim = features.cols();
    labels
        .par_iter_mut()
        .zip(dists.par_iter_mut())
        .enumerate()
        .for_each(|(i, (l, d))| {
            let (j, dd) = nearest(centers, dim, features.row(i));
            *l = j;
            *d = dd;
        });
    // sequential sum keeps the value independent of the thread count
    dists.iter().sum()
}

fn plus_plus_init(features: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = features.rows();
    let dim = features.cols();
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(features.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(features.row(i), &centers[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centers.len();
        centers.extend_from_slice(features.row(pick));
        let c = centers[start..].to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(features.row(i), &c));
        });
    }
    centers
}

/// Lloyd's algorithm from a seeded k-means++ start.
///
/// Stops once no center moves by `tol` or more (Euclidean), or after
/// `max_iter` iterations. An empty cluster is re-seeded at the point farthest
/// from its current center, at most `k` times per iteration.
pub fn kmeans_fit(features: &FeatureMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansFit> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::invalid("tol must be non-negative"));
    }
    let n = features.rows();
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }
    let dim = features.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(features, k, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;
    let mut repairs = 0;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let inertia = assign(features, &centers, &mut labels, &mut dists);
        if let Some(prev) = history.last() {
            debug_assert!(
                inertia <= prev * (1.0 + INERTIA_SLACK) + f64::MIN_POSITIVE,
                "inertia rose"
            );
        }
        history.push(inertia);

        // sums are taken relative to each cluster's first member, so a
        // cluster of identical rows reproduces that row exactly
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        let mut anchor = vec![usize::MAX; k];
        for (i, &l) in labels.iter().enumerate() {
            if anchor[l] == usize::MAX {
                anchor[l] = i;
            }
            counts[l] += 1;
            let a = features.row(anchor[l]);
            for ((s, v), r) in sums[l * dim..(l + 1) * dim].iter_mut().zip(features.row(i)).zip(a) {
                *s += v - r;
            }
        }
        let mut next = centers.clone();
        let mut taken = Vec::new();
        for j in 0..k {
            if counts[j] == 0 {
                // farthest point from its own center, each used once
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    })
                    .expect("n >= k leaves a free point");
                taken.push(far);
                dists[far] = 0.0;
                next[j * dim..(j + 1) * dim].copy_from_slice(features.row(far));
                repairs += 1;
            } else {
                let a = features.row(anchor[j]);
                for ((c, s), r) in next[j * dim..(j + 1) * dim]
                    .iter_mut()
                    .zip(&sums[j * dim..(j + 1) * dim])
                    .zip(a)
                {
                    *c = r + s / counts[j] as f64;
                }
            }
        }
        let shift = next
            .chunks_exact(dim)
            .zip(centers.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        if shift < tol {
            converged = true;
            break;
        }
    }
    for a in 0..k {
        for b in a + 1..k {
            if centers[a * dim..(a + 1) * dim] == centers[b * dim..(b + 1) * dim] {
                return Err(Error::invalid(format!("fewer than {k} distinct feature rows")));
            }
        }
    }
    Ok(KMeansFit {
        model: ClusterModel::new(k, dim, centers, features.config_fingerprint())?,
        inertia_history: history,
        iterations,
        converged,
        repairs,
    })
}
