//! Image Structure Clustering quality metric.
//!
//! Every field-of-view pixel is described by its colour intensities and
//! Gaussian derivative responses. A k-means model groups these descriptors
//! into structure classes, the image becomes the histogram of class
//! proportions, and a linear SVM with Platt calibration maps the histogram to
//! a quality probability.

mod features;
mod kmeans;
mod model_file;
mod svm;

pub use features::{extract_isc_features, FeatureMatrix, IscFeatureConfig};
pub use kmeans::{kmeans_fit, ClusterModel, KMeansFit, DEFAULT_K, DEFAULT_MAX_ITER, DEFAULT_TOL, INERTIA_SLACK};
pub use model_file::MAGIC;
pub use svm::{svm_train, PlattCalibration, SvmModel, SvmTraining, DEFAULT_C, DEFAULT_EPOCHS, INITIAL_JITTER};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{FovMask, RasterImage};

/// Upper bound on pixels per image fed to k-means.
pub const MAX_CLUSTER_PIXELS: usize = 50_000;

/// Normalized cluster-assignment counts.
#[derive(Debug, Clone, PartialEq)]
pub struct IscHistogram(Vec<f64>);

impl IscHistogram {
    pub fn counts(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Assigns every row to its nearest center (ties to the lowest index) and
/// returns the fraction of rows per cluster.
pub fn isc_histogram(features: &FeatureMatrix, model: &ClusterModel) -> Result<IscHistogram> {
    if features.cols() != model.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns, model expects {}",
            features.cols(),
            model.feature_dim()
        )));
    }
    if features.rows() == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let labels: Vec<usize> = (0..features.rows())
        .into_par_iter()
        .map(|i| model.nearest(features.row(i)).0)
        .collect();
    let mut counts = vec![0usize; model.k()];
    for l in labels {
        counts[l] += 1;
    }
    let n = features.rows() as f64;
    Ok(IscHistogram(counts.into_iter().map(|c| c as f64 / n).collect()))
}

/// Feature config, cluster model and SVM, persisted together.
#[derive(Debug, Clone, PartialEq)]
pub struct IscModel {
    pub config: IscFeatureConfig,
    pub cluster: ClusterModel,
    pub svm: SvmModel,
}

impl IscModel {
    pub fn new(config: IscFeatureConfig, cluster: ClusterModel, svm: SvmModel) -> Result<Self> {
        check_compatible(&config, &cluster, &svm)?;
        Ok(Self { config, cluster, svm })
    }

    pub fn score(&self, img: &RasterImage, mask: &FovMask) -> Result<f64> {
        isc_score(img, mask, &self.cluster, &self.svm, &self.config)
    }
}

fn check_compatible(cfg: &IscFeatureConfig, cluster: &ClusterModel, svm: &SvmModel) -> Result<()> {
    if cluster.feature_config_fingerprint() != cfg.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: cfg.fingerprint(),
            actual: cluster.feature_config_fingerprint(),
        });
    }
    if cluster.feature_dim() != cfg.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "cluster dimension {} vs feature dimension {}",
            cluster.feature_dim(),
            cfg.feature_dim()
        )));
    }
    if svm.dim() != cluster.k() {
        return Err(Error::DimensionMismatch(format!(
            "SVM expects {} inputs, cluster model has {} clusters",
            svm.dim(),
            cluster.k()
        )));
    }
    Ok(())
}

/// Calibrated quality probability of one image.
pub fn isc_score(
    img: &RasterImage,
    mask: &FovMask,
    cluster: &ClusterModel,
    svm: &SvmModel,
    cfg: &IscFeatureConfig,
) -> Result<f64> {
    check_compatible(cfg, cluster, svm)?;
    let features = extract_isc_features(img, mask, cfg)?;
    isc_score_features(&features, cluster, svm)
}

/// Score from a precomputed feature matrix. Row order does not matter.
pub fn isc_score_features(features: &FeatureMatrix, cluster: &ClusterModel, svm: &SvmModel) -> Result<f64> {
    let hist = isc_histogram(features, cluster)?;
    Ok(svm.probability(hist.counts()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IscTrainParams {
    pub config: IscFeatureConfig,
    pub k: usize,
    /// Pixels per image sampled for clustering, at most [`MAX_CLUSTER_PIXELS`].
    pub pixels_per_image: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub c_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for IscTrainParams {
    fn default() -> Self {
        Self {
            config: IscFeatureConfig::default(),
            k: DEFAULT_K,
            pixels_per_image: 5_000,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            c_reg: DEFAULT_C,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IscTraining {
    pub model: IscModel,
    pub kmeans: KMeansFit,
    pub svm: SvmTraining,
    pub histograms: Vec<IscHistogram>,
}

/// Trains the full pipeline on labelled images (`true` = acceptable quality).
pub fn train_isc(images: &[(RasterImage, FovMask)], labels: &[bool], params: &IscTrainParams) -> Result<IscTraining> {
    if images.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images, {} labels",
            images.len(),
            labels.len()
        )));
    }
    if params.pixels_per_image == 0 || params.pixels_per_image > MAX_CLUSTER_PIXELS {
        return Err(Error::invalid(format!(
            "pixels_per_image must be in 1..={MAX_CLUSTER_PIXELS}"
        )));
    }
    if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
        return Err(Error::SingleClass);
    }
    let features = images
        .par_iter()
        .map(|(img, mask)| extract_isc_features(img, mask, &params.config))
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<FeatureMatrix> = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let m = params.pixels_per_image.min(f.rows());
            let mut idx = rand::seq::index::sample(&mut rng, f.rows(), m).into_vec();
            idx.sort_unstable();
            f.select_rows(&idx)
        })
        .collect();
    let pooled = FeatureMatrix::concat(&samples)?;
    let kmeans = kmeans_fit(&pooled, params.k, params.seed, params.max_iter, params.tol)?;
    let histograms = features
        .iter()
        .map(|f| isc_histogram(f, &kmeans.model))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<Vec<f64>> = histograms.iter().map(|h| h.counts().to_vec()).collect();
    let svm = svm_train(&xs, labels, params.c_reg, params.epochs, params.seed)?;
    let model = IscModel::new(params.config.clone(), kmeans.model.clone(), svm.model.clone())?;
    Ok(IscTraining {
        model,
        kmeans,
        svm,
        histograms,
    })
}
