//! Multiscale Frangi vesselness and vessel-tree binarisation.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{erode_mask, FovMask, GrayImage, RasterImage, ScaleSpaceParams, DEFAULT_TRUNCATION};

/// Intensities are multiplied by this before the Hessian so that `c` is
/// expressed on a 0..100 scale.
pub const INTENSITY_SCALE: f64 = 100.0;

/// Pixels closer than this to the field-of-view rim are ignored when scoring.
pub const FOV_EROSION_PX: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct FrangiParams {
    pub scales: ScaleSpaceParams,
    /// Blob-rejection sensitivity.
    pub beta: f64,
    /// Structureness sensitivity, on the 0..100 intensity scale.
    pub c: f64,
    /// Respond to bright ridges on a dark background (`lambda2 < 0`).
    /// Fundus vessels are dark, so callers working on raw fundus images
    /// invert the green channel when this is set.
    pub bright_ridges: bool,
}

impl FrangiParams {
    pub fn new(scales: ScaleSpaceParams, beta: f64, c: f64, bright_ridges: bool) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid("beta and c must be positive"));
        }
        Ok(Self {
            scales,
            beta,
            c,
            bright_ridges,
        })
    }

    pub fn with_sigmas(sigmas: &[f64]) -> Result<Self> {
        let d = Self::default();
        Self::new(
            ScaleSpaceParams::with_sigmas(sigmas.to_vec())?,
            d.beta,
            d.c,
            d.bright_ridges,
        )
    }

    /// Stable byte encoding, used for fingerprints.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in self.scales.sigmas() {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out.extend_from_slice(&self.scales.truncation_radius().to_le_bytes());
        out.extend_from_slice(&self.beta.to_le_bytes());
        out.extend_from_slice(&self.c.to_le_bytes());
        out.push(u8::from(self.bright_ridges));
        out
    }
}

impl Default for FrangiParams {
    fn default() -> Self {
        Self {
            scales: ScaleSpaceParams::new(vec![1.0, 1.41, 2.0, 2.83, 4.0], DEFAULT_TRUNCATION)
                .expect("valid default scales"),
            beta: 0.5,
            c: 15.0,
            bright_ridges: true,
        }
    }
}

/// Per-pixel vesselness in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselProbabilityMap(GrayImage);

impl VesselProbabilityMap {
    pub fn new(plane: GrayImage) -> Result<Self> {
        if plane.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("vesselness values must lie in [0, 1]"));
        }
        Ok(Self(plane))
    }

    pub fn plane(&self) -> &GrayImage {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.0.get(x, y)
    }

    /// Zeroes every pixel outside `mask`.
    pub fn masked(&self, mask: &FovMask) -> Result<Self> {
        if mask.dims() != self.dims() {
            return Err(Error::DimensionMismatch("mask and map differ in size".into()));
        }
        let (w, h) = self.dims();
        Ok(Self(GrayImage::from_fn(w, h, |x, y| {
            if mask.contains(x, y) {
                self.0.get(x, y)
            } else {
                0.0
            }
        })))
    }
}

/// Binary vessel tree: `true` marks a vessel pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryVesselTree {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryVesselTree {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {width}x{height} tree",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Writes a 1-bit greyscale PNG (0 = background, 1 = vessel, which
    /// decoders expand to 255).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let enc_err = |e: png::EncodingError| Error::Encode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        };
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::One);
        let mut writer = encoder.write_header().map_err(enc_err)?;
        let stride = self.width.div_ceil(8);
        let mut packed = vec![0u8; stride * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    packed[y * stride + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer.write_image_data(&packed).map_err(enc_err)?;
        writer.finish().map_err(enc_err)
    }

    /// Reads any greyscale or colour raster; pixels at or above half
    /// intensity are vessel.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = crate::raster::load_image(path)?;
        let (w, h) = img.dims();
        let data = img.mean_channel().data().iter().map(|v| *v >= 0.5).collect();
        Self::new(w, h, data)
    }
}

#[inline]
fn ordered_eigenvalues(xx: f64, xy: f64, yy: f64) -> (f64, f64) {
    let mean = 0.5 * (xx + yy);
    let half_diff = 0.5 * (xx - yy);
    let root = (half_diff * half_diff + xy * xy).sqrt();
    let (a, b) = (mean + root, mean - root);
    if a.abs() <= b.abs() {
        (a, b)
    } else {
        (b, a)
    }
}

/// Frangi response for one eigenvalue pair, `|l1| <= |l2|`.
#[inline]
pub fn frangi_response(l1: f64, l2: f64, beta: f64, c: f64, bright_ridges: bool) -> f64 {
    let ridge = if bright_ridges { l2 < 0.0 } else { l2 > 0.0 };
    if !ridge {
        return 0.0;
    }
    let rb = l1 / l2;
    let s2 = l1 * l1 + l2 * l2;
    (-rb * rb / (2.0 * beta * beta)).exp() * (1.0 - (-s2 / (2.0 * c * c)).exp())
}

/// Vesselness at a single scale.
pub fn single_scale_vesselness(green: &GrayImage, sigma: f64, params: &FrangiParams) -> Result<GrayImage> {
    let scaled = green.map(|v| v * INTENSITY_SCALE);
    let hess = crate::raster::hessian_at_scale_with(&scaled, sigma, params.scales.truncation_radius())?;
    let (w, h) = green.dims();
    let data = hess
        .xx
        .data()
        .iter()
        .zip(hess.xy.data())
        .zip(hess.yy.data())
        .map(|((xx, xy), yy)| {
            let (l1, l2) = ordered_eigenvalues(*xx, *xy, *yy);
            frangi_response(l1, l2, params.beta, params.c, params.bright_ridges)
        })
        .collect();
    GrayImage::new(w, h, data)
}

/// Maximum of the single-scale responses over every configured scale.
pub fn frangi_vesselness(green: &GrayImage, params: &FrangiParams) -> Result<VesselProbabilityMap> {
    let (w, h) = green.dims();
    let mut best = vec![0.0f64; w * h];
    for &sigma in params.scales.sigmas() {
        let v = single_scale_vesselness(green, sigma, params)?;
        for (b, x) in best.iter_mut().zip(v.data()) {
            *b = b.max(*x);
        }
    }
    VesselProbabilityMap::new(GrayImage::new(w, h, best)?)
}

/// Vesselness of a fundus photograph's green channel. The channel is
/// inverted when `bright_ridges` is set, since vessels appear dark.
pub fn fundus_vesselness(img: &RasterImage, params: &FrangiParams) -> Result<VesselProbabilityMap> {
    let green = img.green();
    let green = if params.bright_ridges {
        green.map(|v| 1.0 - v)
    } else {
        green
    };
    frangi_vesselness(&green, params)
}

pub fn binarize(map: &VesselProbabilityMap, threshold: f64) -> Result<BinaryVesselTree> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let (w, h) = map.dims();
    BinaryVesselTree::new(w, h, map.plane().data().iter().map(|v| *v >= threshold).collect())
}

/// Field-of-view mask used for scoring: the input mask eroded by
/// [`FOV_EROSION_PX`]. Falls back to the un-eroded mask when erosion
/// would remove everything.
pub fn scoring_mask(mask: &FovMask) -> FovMask {
    erode_mask(mask, FOV_EROSION_PX).unwrap_or_else(|| mask.clone())
}

/// Vesselness restricted to the (eroded) field of view.
pub fn masked_vesselness(img: &RasterImage, mask: &FovMask, params: &FrangiParams) -> Result<VesselProbabilityMap> {
    if img.dims() != mask.dims() {
        return Err(Error::DimensionMismatch("image and mask differ in size".into()));
    }
    fundus_vesselness(img, params)?.masked(&scoring_mask(mask))
}

/// Classical segmentation: green-channel Frangi, restricted to the field of
/// view, thresholded.
pub fn segment_classical(
    img: &RasterImage,
    mask: &FovMask,
    params: &FrangiParams,
    threshold: f64,
) -> Result<BinaryVesselTree> {
    binarize(&masked_vesselness(img, mask, params)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ScaleSpaceParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bar_image(w: usize, h: usize) -> GrayImage {
        // rows 30..34 bright
        GrayImage::from_fn(w, h, |_, y| if (30..34).contains(&y) { 1.0 } else { 0.0 })
    }

    fn params(sigmas: &[f64], bright: bool) -> FrangiParams {
        FrangiParams {
            scales: ScaleSpaceParams::with_sigmas(sigmas.to_vec()).unwrap(),
            bright_ridges: bright,
            ..FrangiParams::default()
        }
    }

    fn noise(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GrayImage::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    #[test]
    fn eigenvalues_sorted_by_magnitude() {
        let (l1, l2) = ordered_eigenvalues(-5.0, 0.0, 1.0);
        assert_eq!((l1, l2), (1.0, -5.0));
        let (l1, l2) = ordered_eigenvalues(2.0, 1.0, 2.0);
        assert!((l1 - 1.0).abs() < 1e-12 && (l2 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_wrong_sign_give_zero() {
        assert_eq!(frangi_response(0.0, 0.0, 0.5, 15.0, true), 0.0);
        assert_eq!(frangi_response(-1.0, 3.0, 0.5, 15.0, true), 0.0);
        assert!(frangi_response(-1.0, 3.0, 0.5, 15.0, false) > 0.0);
    }

    #[test]
    fn constant_image_has_no_vessels() {
        let map = frangi_vesselness(&GrayImage::filled(32, 32, 0.4), &FrangiParams::default()).unwrap();
        assert!(map.plane().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bar_centreline_dominates_background() {
        let img = bar_image(96, 64);
        let map = frangi_vesselness(&img, &params(&[1.0, 2.0, 3.0, 4.0], true)).unwrap();
        let mut background: Vec<f64> = Vec::new();
        for y in 0..64 {
            for x in 0..96 {
                if !(26..38).contains(&y) {
                    background.push(map.get(x, y));
                }
            }
        }
        background.sort_by(f64::total_cmp);
        let p99 = background[(0.99 * (background.len() - 1) as f64).round() as usize];
        let bg_max = *background.last().unwrap();
        let centre: Vec<f64> = (0..96).flat_map(|x| [map.get(x, 31), map.get(x, 32)]).collect();
        let above = centre.iter().filter(|v| **v > p99).count();
        assert!(above as f64 >= 0.95 * centre.len() as f64);
        assert!(centre.iter().all(|v| *v > bg_max));
    }

    #[test]
    fn rotation_equivariance_is_exact() {
        let img = noise(37, 29, 4);
        let p = params(&[1.0, 2.0], true);
        let a = frangi_vesselness(&img, &p).unwrap();
        let b = frangi_vesselness(&img.rotate90(), &p).unwrap();
        assert_eq!(b.plane(), &a.plane().rotate90());
    }

    #[test]
    fn max_over_scales_bounds_each_scale() {
        let img = noise(40, 40, 2);
        let p = params(&[1.0, 1.5, 3.0], false);
        let map = frangi_vesselness(&img, &p).unwrap();
        for &s in p.scales.sigmas() {
            let single = single_scale_vesselness(&img, s, &p).unwrap();
            assert!(map.plane().data().iter().zip(single.data()).all(|(m, v)| m >= v));
        }
        assert!(map.plane().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn contrast_never_lowers_single_scale_response() {
        for seed in 0..5 {
            let img = noise(32, 32, seed);
            let p = params(&[1.5], true);
            let base = single_scale_vesselness(&img, 1.5, &p).unwrap();
            for k in [1.5, 3.0] {
                let boosted = single_scale_vesselness(&img.map(|v| v * k), 1.5, &p).unwrap();
                assert!(boosted
                    .data()
                    .iter()
                    .zip(base.data())
                    .all(|(b, a)| *b >= *a * (1.0 - 1e-12)));
            }
        }
    }

    #[test]
    fn sign_convention_is_symmetric() {
        let img = noise(30, 30, 8);
        let dark = frangi_vesselness(&img, &params(&[1.0, 2.0], false)).unwrap();
        let negated = frangi_vesselness(&img.map(|v| -v), &params(&[1.0, 2.0], true)).unwrap();
        assert_eq!(dark, negated);
        let inverted = frangi_vesselness(&img.map(|v| 1.0 - v), &params(&[1.0, 2.0], true)).unwrap();
        for (a, b) in dark.plane().data().iter().zip(inverted.plane().data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn binarize_thresholds() {
        let map = VesselProbabilityMap::new(GrayImage::new(2, 1, vec![0.2, 0.7]).unwrap()).unwrap();
        assert_eq!(binarize(&map, 0.5).unwrap().data(), &[false, true]);
        assert_eq!(binarize(&map, 0.0).unwrap().count(), 2);
        assert_eq!(binarize(&map, 0.71).unwrap().count(), 0);
        assert!(binarize(&map, 1.5).is_err());
    }

    #[test]
    fn binarize_is_monotone() {
        let map = frangi_vesselness(&noise(24, 24, 1), &params(&[1.0], true)).unwrap();
        let mut prev = usize::MAX;
        for t in [0.0, 0.01, 0.05, 0.1, 0.3, 0.6, 1.0] {
            let n = binarize(&map, t).unwrap().count();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn black_image_segments_empty() {
        let img = RasterImage::filled(40, 40, [0.0; 3]);
        let tree = segment_classical(&img, &FovMask::full(40, 40), &FrangiParams::default(), 0.1).unwrap();
        assert_eq!(tree.count(), 0);
    }

    #[test]
    fn nothing_outside_the_fov() {
        let img = RasterImage::from_fn(64, 64, |x, y| {
            let v = if (x + y) % 7 == 0 { 0.1 } else { 0.8 };
            [v, v, v]
        });
        let mask = FovMask::from_fn(64, 64, |x, _| x < 32).unwrap();
        let tree = segment_classical(&img, &mask, &FrangiParams::default(), 1e-12).unwrap();
        for y in 0..64 {
            for x in 27..64 {
                assert!(!tree.get(x, y));
            }
        }
    }

    #[test]
    fn one_bit_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tree.png");
        let data: Vec<bool> = (0..13 * 5).map(|i| i % 3 == 0).collect();
        let tree = BinaryVesselTree::new(13, 5, data).unwrap();
        tree.save_png(&p).unwrap();
        let decoded = image::open(&p).unwrap().to_luma8();
        assert!(decoded.pixels().all(|px| px.0[0] == 0 || px.0[0] == 255));
        assert_eq!(BinaryVesselTree::load(&p).unwrap(), tree);
    }
}
