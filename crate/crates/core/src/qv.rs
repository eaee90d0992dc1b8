//! Vessel-weighted anisotropy quality score.
//!
//! A local singular value decomposition of the gradient field measures how
//! strongly oriented the image is around each pixel. Sharp, well-contrasted
//! vessels give nearly rank-one gradient windows; blur and noise push the
//! two singular values together. The score averages this coherence with the
//! Frangi vesselness as weights, so only vessel neighbourhoods count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fingerprint;
use crate::raster::{detect_fov, gaussian_derivative, FovMask, GrayImage, RasterImage, DEFAULT_FOV_THRESHOLD};
use crate::vesselness::{masked_vesselness, FrangiParams};

/// Default SVD window at 512x512.
pub const DEFAULT_WINDOW: usize = 15;

/// Degeneracy cut-off for both the singular-value sum and the weight sum.
pub const EPSILON: f64 = 1e-12;

/// Scale of the derivative-of-Gaussian gradient fed to the SVD.
pub const GRADIENT_SIGMA: f64 = 1.0;

/// Pixels with at least this vesselness are reported as vessel pixels.
pub const VESSEL_COUNT_THRESHOLD: f64 = 0.01;

/// Per-pixel coherence `(s1 - s2) / (s1 + s2)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyField(GrayImage);

impl AnisotropyField {
    pub fn plane(&self) -> &GrayImage {
        &self.0
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QvReport {
    pub score: f64,
    pub vessel_pixel_count: usize,
    pub params_fingerprint: u64,
}

/// Singular values `s1 >= s2 >= 0` of an `n x 2` matrix given its Gram
/// entries `sum gx^2`, `sum gx gy`, `sum gy^2`.
#[inline]
pub fn singular_values_from_gram(sxx: f64, sxy: f64, syy: f64) -> (f64, f64) {
    let mean = 0.5 * (sxx + syy);
    let half_diff = 0.5 * (sxx - syy);
    let root = (half_diff * half_diff + sxy * sxy).sqrt();
    ((mean + root).max(0.0).sqrt(), (mean - root).max(0.0).sqrt())
}

#[inline]
pub fn coherence(s1: f64, s2: f64) -> f64 {
    let total = s1 + s2;
    if total < EPSILON {
        0.0
    } else {
        ((s1 - s2) / total).clamp(0.0, 1.0)
    }
}

/// Sum over a `(2r+1)`-wide window clipped to the image, along rows then columns.
fn box_sum(plane: &[f64], w: usize, h: usize, r: usize) -> Vec<f64> {
    let mut rows = vec![0.0; w * h];
    rows.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let src = &plane[y * w..(y + 1) * w];
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            *o = src[lo..=hi].iter().sum();
        }
    });
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for (x, o) in row.iter_mut().enumerate() {
            *o = (lo..=hi).map(|yy| rows[yy * w + x]).sum();
        }
    });
    out
}

/// Local gradient coherence over `window x window` neighbourhoods.
///
/// Windows are clipped at the image border.
pub fn local_svd_anisotropy(green: &GrayImage, window: usize) -> Result<AnisotropyField> {
    let (w, h) = green.dims();
    if window < 3 || window.is_multiple_of(2) || window > w.min(h) {
        return Err(Error::invalid(format!(
            "window must be odd, at least 3 and at most {}; got {window}",
            w.min(h)
        )));
    }
    let gx = gaussian_derivative(green, GRADIENT_SIGMA, 1, 0)?;
    let gy = gaussian_derivative(green, GRADIENT_SIGMA, 0, 1)?;
    let prod =
        |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { gx.data().iter().zip(gy.data()).map(|(a, b)| f(*a, *b)).collect() };
    let r = window / 2;
    let sxx = box_sum(&prod(&|a, _| a * a), w, h, r);
    let sxy = box_sum(&prod(&|a, b| a * b), w, h, r);
    let syy = box_sum(&prod(&|_, b| b * b), w, h, r);
    let data = (0..w * h)
        .map(|i| {
            let (s1, s2) = singular_values_from_gram(sxx[i], sxy[i], syy[i]);
            coherence(s1, s2)
        })
        .collect();
    Ok(AnisotropyField(GrayImage::new(w, h, data)?))
}

fn params_fingerprint(params: &FrangiParams, window: usize) -> u64 {
    let mut bytes = params.canonical_bytes();
    bytes.extend_from_slice(&(window as u64).to_le_bytes());
    fingerprint(&bytes)
}

/// Quality score with the field of view detected automatically.
///
/// Images without any field of view (e.g. all black) score 0.
pub fn qv_score(img: &RasterImage, params: &FrangiParams, window: usize) -> Result<QvReport> {
    match detect_fov(img, DEFAULT_FOV_THRESHOLD) {
        Ok(mask) => qv_score_masked(img, &mask, params, window),
        Err(Error::EmptyFov) => {
            // still validate the window against the image
            local_svd_anisotropy(&img.green(), window)?;
            Ok(QvReport {
                score: 0.0,
                vessel_pixel_count: 0,
                params_fingerprint: params_fingerprint(params, window),
            })
        }
        Err(e) => Err(e),
    }
}

/// `sum V(p) A(p) / sum V(p)` over the eroded field of view.
pub fn qv_score_masked(img: &RasterImage, mask: &FovMask, params: &FrangiParams, window: usize) -> Result<QvReport> {
    let anisotropy = local_svd_anisotropy(&img.green(), window)?;
    let vesselness = masked_vesselness(img, mask, params)?;
    let weights = vesselness.plane().data();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut count = 0;
    for (v, a) in weights.iter().zip(anisotropy.plane().data()) {
        num += v * a;
        den += v;
        if *v >= VESSEL_COUNT_THRESHOLD {
            count += 1;
        }
    }
    let (score, vessel_pixel_count) = if den < EPSILON {
        (0.0, 0)
    } else {
        ((num / den).clamp(0.0, 1.0), count)
    };
    Ok(QvReport {
        score,
        vessel_pixel_count,
        params_fingerprint: params_fingerprint(params, window),
    })
}
