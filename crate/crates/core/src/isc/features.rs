use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fingerprint;
use crate::raster::{gaussian_derivative, FovMask, RasterImage};

/// Which per-channel responses make up a pixel's feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct IscFeatureConfig {
    sigmas: Vec<f64>,
    derivative_orders: Vec<(u8, u8)>,
    include_raw_intensity: bool,
}

impl IscFeatureConfig {
    pub fn new(sigmas: Vec<f64>, derivative_orders: Vec<(u8, u8)>, include_raw_intensity: bool) -> Result<Self> {
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("feature sigmas must be positive"));
        }
        if derivative_orders.iter().any(|(dx, dy)| dx + dy > 1) {
            return Err(Error::invalid("feature derivative orders must satisfy dx + dy <= 1"));
        }
        let filtered = !sigmas.is_empty() && !derivative_orders.is_empty();
        if !include_raw_intensity && !filtered {
            return Err(Error::invalid("feature config enables no features"));
        }
        Ok(Self {
            sigmas,
            derivative_orders,
            include_raw_intensity,
        })
    }

    /// Raw intensity only.
    pub fn intensity_only() -> Self {
        Self::new(Vec::new(), Vec::new(), true).expect("valid config")
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn derivative_orders(&self) -> &[(u8, u8)] {
        &self.derivative_orders
    }

    pub fn include_raw_intensity(&self) -> bool {
        self.include_raw_intensity
    }

    /// Features per channel.
    pub fn per_channel(&self) -> usize {
        usize::from(self.include_raw_intensity) + self.sigmas.len() * self.derivative_orders.len()
    }

    pub fn feature_dim(&self) -> usize {
        RasterImage::CHANNELS * self.per_channel()
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&(self.sigmas.len() as u64).to_le_bytes());
        for s in &self.sigmas {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&(self.derivative_orders.len() as u64).to_le_bytes());
        for (dx, dy) in &self.derivative_orders {
            out.extend_from_slice(&u64::from(*dx).to_le_bytes());
            out.extend_from_slice(&u64::from(*dy).to_le_bytes());
        }
        out.extend_from_slice(&u64::from(self.include_raw_intensity).to_le_bytes());
        out
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.canonical_bytes())
    }
}

/// Raw intensity plus first-order derivatives at sigmas 1, 2 and 4: 21 features.
impl Default for IscFeatureConfig {
    fn default() -> Self {
        Self::new(vec![1.0, 2.0, 4.0], vec![(1, 0), (0, 1)], true).expect("valid config")
    }
}

/// Row-major sample matrix, one row per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    config_fingerprint: u64,
}

impl FeatureMatrix {
    /// Wraps arbitrary samples; the config fingerprint is 0.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols == 0 {
            return Err(Error::invalid("feature matrix needs at least one column"));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            data,
            config_fingerprint: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn config_fingerprint(&self) -> u64 {
        self.config_fingerprint
    }

    /// Copies the listed rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
            config_fingerprint: self.config_fingerprint,
        }
    }

    /// Stacks matrices with equal width and config.
    pub fn concat(parts: &[FeatureMatrix]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::invalid("nothing to concatenate"))?;
        if parts
            .iter()
            .any(|p| p.cols != first.cols || p.config_fingerprint != first.config_fingerprint)
        {
            return Err(Error::DimensionMismatch("feature matrices differ in layout".into()));
        }
        Ok(Self {
            rows: parts.iter().map(|p| p.rows).sum(),
            cols: first.cols,
            data: parts.iter().flat_map(|p| p.data.iter().copied()).collect(),
            config_fingerprint: first.config_fingerprint,
        })
    }

    /// Zero mean and unit (population) variance per column. Columns without
    /// spread become all zeros.
    pub fn standardize(&mut self) {
        let n = self.rows as f64;
        if self.rows == 0 {
            return;
        }
        for c in 0..self.cols {
            let column = || self.data.iter().skip(c).step_by(self.cols);
            let mean = column().sum::<f64>() / n;
            let var = column().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let scale = column().fold(0.0f64, |a, v| a.max(v.abs()));
            let sd = var.sqrt();
            let degenerate = sd <= 64.0 * f64::EPSILON * scale;
            for v in self.data.iter_mut().skip(c).step_by(self.cols) {
                *v = if degenerate { 0.0 } else { (*v - mean) / sd };
            }
        }
    }
}

/// Per-pixel features for every field-of-view pixel, in row-major pixel
/// order, standardized per column over the image.
pub fn extract_isc_features(img: &RasterImage, mask: &FovMask, cfg: &IscFeatureConfig) -> Result<FeatureMatrix> {
    if img.dims() != mask.dims() {
        return Err(Error::DimensionMismatch(format!(
            "image {:?} vs mask {:?}",
            img.dims(),
            mask.dims()
        )));
    }
    let pixels: Vec<usize> = mask
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, inside)| inside.then_some(i))
        .collect();
    if pixels.is_empty() {
        return Err(Error::EmptyFov);
    }
    let mut jobs = Vec::new();
    for c in 0..RasterImage::CHANNELS {
        if cfg.include_raw_intensity {
            jobs.push((c, None));
        }
        for &s in &cfg.sigmas {
            for &(dx, dy) in &cfg.derivative_orders {
                jobs.push((c, Some((s, dx, dy))));
            }
        }
    }
    let planes = jobs
        .par_iter()
        .map(|&(c, filter)| {
            let plane = img.channel(c);
            match filter {
                None => Ok(plane.into_data()),
                Some((s, dx, dy)) => Ok(gaussian_derivative(&plane, s, dx, dy)?.into_data()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let cols = planes.len();
    let mut data = Vec::with_capacity(pixels.len() * cols);
    for &p in &pixels {
        data.extend(planes.iter().map(|plane| plane[p]));
    }
    let mut m = FeatureMatrix {
        rows: pixels.len(),
        cols,
        data,
        config_fingerprint: cfg.fingerprint(),
    };
    m.standardize();
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_follow_config() {
        assert_eq!(IscFeatureConfig::default().feature_dim(), 21);
        let cfg = IscFeatureConfig::new(vec![1.0, 2.0], vec![(1, 0), (0, 1)], true).unwrap();
        assert_eq!(cfg.feature_dim(), 15);
        assert_eq!(IscFeatureConfig::intensity_only().feature_dim(), 3);
        assert!(IscFeatureConfig::new(vec![1.0], vec![(1, 1)], true).is_err());
        assert!(IscFeatureConfig::new(vec![-1.0], vec![(1, 0)], true).is_err());
        assert!(IscFeatureConfig::new(vec![], vec![(1, 0)], false).is_err());
        assert_ne!(cfg.fingerprint(), IscFeatureConfig::default().fingerprint());
    }

    #[test]
    fn constant_image_standardizes_to_zero() {
        let img = RasterImage::filled(24, 20, [0.4, 0.2, 0.1]);
        let mask = FovMask::from_fn(24, 20, |x, y| (x + y) % 3 != 0).unwrap();
        for cfg in [IscFeatureConfig::intensity_only(), IscFeatureConfig::default()] {
            let f = extract_isc_features(&img, &mask, &cfg).unwrap();
            assert_eq!(f.rows(), mask.count());
            assert_eq!(f.cols(), cfg.feature_dim());
            assert!(f.data().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn columns_are_standardized() {
        let img = RasterImage::from_fn(32, 32, |x, y| [x as f64 / 32.0, ((x * y) % 7) as f64 / 7.0, 0.5]);
        let f = extract_isc_features(&img, &FovMask::full(32, 32), &IscFeatureConfig::default()).unwrap();
        for c in 0..f.cols() {
            let col: Vec<f64> = (0..f.rows()).map(|i| f.row(i)[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 1e-12);
            // the blue channel is flat
            assert!((var - 1.0).abs() < 1e-9 || var == 0.0, "column {c}: {var}");
        }
    }

    #[test]
    fn mask_must_match() {
        let img = RasterImage::filled(8, 8, [0.5; 3]);
        assert!(extract_isc_features(&img, &FovMask::full(8, 9), &IscFeatureConfig::default()).is_err());
    }
}
