//! Image containers and the pixel-level primitives every metric builds on.
//!
//! Pixels are stored as `f64` in row-major order. [`RasterImage`] interleaves
//! the three colour channels (`R, G, B`) and keeps every value in `[0, 1]`;
//! [`GrayImage`] is an unconstrained single plane used for filter responses.

mod fov;
mod io;
mod patches;
mod resample;
mod scale_space;

pub use fov::{detect_fov, erode_mask, FovMask, DEFAULT_FOV_THRESHOLD};
pub use io::{load_image, save_png};
pub use patches::{extract_patches, Patch};
pub use resample::crop_resize;
pub use scale_space::{
    gaussian_blur, gaussian_derivative, gaussian_derivative_with, hessian_at_scale, hessian_at_scale_with, Hessian,
    ScaleSpaceParams, DEFAULT_TRUNCATION,
};

use crate::error::{Error, Result};

/// Three-channel raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub const CHANNELS: usize = 3;

    /// Builds an image from interleaved RGB data, validating size and range.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height * Self::CHANNELS {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::invalid(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(x, y)`; results are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| clamp_unit(*v)));
            }
        }
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    /// Stacks three planes as R, G, B. Values are clamped to `[0, 1]`.
    pub fn from_channels(r: &GrayImage, g: &GrayImage, b: &GrayImage) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(Error::DimensionMismatch("channel planes differ in size".into()));
        }
        let (w, h) = r.dims();
        Ok(Self::from_fn(w, h, |x, y| [r.get(x, y), g.get(x, y), b.get(x, y)]))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Interleaved RGB samples, row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        for (c, v) in rgb.iter().enumerate() {
            self.data[i + c] = clamp_unit(*v);
        }
    }

    /// One colour plane (0 = R, 1 = G, 2 = B).
    pub fn channel(&self, c: usize) -> GrayImage {
        assert!(c < 3, "channel index {c} out of range");
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    pub fn green(&self) -> GrayImage {
        self.channel(1)
    }

    /// Per-pixel mean of the three channels.
    pub fn mean_channel(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.chunks_exact(3).map(|p| (p[0] + p[1] + p[2]) / 3.0).collect(),
        }
    }

    /// Applies `f` to every channel of every pixel, clamping the result.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| clamp_unit(f(*v))).collect(),
        }
    }

    /// Copies the `w x h` window at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Gaussian blur of every channel; results stay in `[0, 1]`.
    pub fn blurred(&self, sigma: f64) -> Self {
        let planes: Vec<GrayImage> = (0..3).map(|c| gaussian_blur(&self.channel(c), sigma)).collect();
        Self::from_channels(&planes[0], &planes[1], &planes[2]).expect("planes share dimensions")
    }
}

/// Single float plane. Values are finite but otherwise unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("plane contains non-finite values"));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Rotates the plane 90 degrees clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = self.dims();
        // Output is h wide and w tall; out(x', y') = in(y', h - 1 - x').
        Self::from_fn(h, w, |xo, yo| self.get(yo, h - 1 - xo))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_and_bad_sizes() {
        assert!(RasterImage::new(1, 1, vec![0.0, 0.5, 1.5]).is_err());
        assert!(RasterImage::new(2, 1, vec![0.0; 3]).is_err());
        assert!(RasterImage::new(0, 1, vec![]).is_err());
        assert!(RasterImage::new(1, 1, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(RasterImage::new(1, 1, vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn channel_split_round_trips() {
        let img = RasterImage::from_fn(4, 3, |x, y| [x as f64 / 4.0, y as f64 / 3.0, 0.25]);
        let back = RasterImage::from_channels(&img.channel(0), &img.channel(1), &img.channel(2)).unwrap();
        assert_eq!(img, back);
        assert_eq!(img.green().get(2, 2), 2.0 / 3.0);
    }

    #[test]
    fn rotate_four_times_is_identity() {
        let g = GrayImage::from_fn(5, 3, |x, y| (x * 7 + y) as f64);
        let r = g.rotate90();
        assert_eq!(r.dims(), (3, 5));
        assert_eq!(r.rotate90().rotate90().rotate90(), g);
        // top-left of the rotated plane comes from the bottom-left of the source
        assert_eq!(r.get(0, 0), g.get(0, 2));
    }
}
