//! Separable Gaussian and Gaussian-derivative filtering.
//!
//! Kernels are sampled at integer offsets and stored as one half plus the
//! centre tap. Every convolution sums mirrored taps pairwise,
//! `w[k] * (x[i+k] ± x[i-k])`, with reflected borders. Together with a pass
//! order that depends only on the derivative orders, this makes the filters
//! exactly equivariant (bit for bit) under axis flips, transposes and
//! therefore 90 degree rotations.

use rayon::prelude::*;

use super::GrayImage;
use crate::error::{Error, Result};

/// Kernel half-width in multiples of sigma.
pub const DEFAULT_TRUNCATION: f64 = 4.0;

/// A set of Gaussian scales and the kernel truncation used at every scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSpaceParams {
    sigmas: Vec<f64>,
    truncation_radius: f64,
}

impl ScaleSpaceParams {
    pub fn new(sigmas: Vec<f64>, truncation_radius: f64) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::invalid("at least one scale is required"));
        }
        if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("scales must be positive and finite"));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("scales must be strictly increasing"));
        }
        if !(truncation_radius >= 3.0 && truncation_radius.is_finite()) {
            return Err(Error::invalid("truncation radius must be at least 3 sigma"));
        }
        Ok(Self {
            sigmas,
            truncation_radius,
        })
    }

    pub fn with_sigmas(sigmas: Vec<f64>) -> Result<Self> {
        Self::new(sigmas, DEFAULT_TRUNCATION)
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn truncation_radius(&self) -> f64 {
        self.truncation_radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

/// Half kernel: `taps[0]` is the centre, `taps[k]` the weight at offset `+k`.
/// Odd kernels carry weight `-taps[k]` at offset `-k`.
#[derive(Debug, Clone)]
struct Kernel {
    taps: Vec<f64>,
    parity: Parity,
}

fn radius_for(sigma: f64, truncation: f64) -> usize {
    ((truncation * sigma).ceil() as usize).max(1)
}

impl Kernel {
    fn new(sigma: f64, order: u8, truncation: f64) -> Self {
        let r = radius_for(sigma, truncation);
        let gauss: Vec<f64> = (0..=r)
            .map(|k| {
                let x = k as f64;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        match order {
            0 => {
                let total = gauss[0] + 2.0 * gauss[1..].iter().sum::<f64>();
                Kernel {
                    taps: gauss.iter().map(|g| g / total).collect(),
                    parity: Parity::Even,
                }
            }
            1 => {
                // x G(x), scaled so a unit ramp differentiates to exactly 1.
                let mut taps: Vec<f64> = gauss.iter().enumerate().map(|(k, g)| k as f64 * g).collect();
                let moment: f64 = taps.iter().enumerate().map(|(k, t)| 2.0 * k as f64 * t).sum();
                for t in &mut taps {
                    *t /= moment;
                }
                Kernel {
                    taps,
                    parity: Parity::Odd,
                }
            }
            2 => {
                // (x^2 - c) G(x) with c chosen for zero DC response, then scaled
                // so x^2 differentiates to exactly 2.
                let mass = gauss[0] + 2.0 * gauss[1..].iter().sum::<f64>();
                let second: f64 = gauss
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, g)| 2.0 * (k * k) as f64 * g)
                    .sum();
                let c = second / mass;
                let mut taps: Vec<f64> = gauss
                    .iter()
                    .enumerate()
                    .map(|(k, g)| ((k * k) as f64 - c) * g)
                    .collect();
                let curvature: f64 = taps.iter().enumerate().skip(1).map(|(k, t)| (k * k) as f64 * t).sum();
                for t in &mut taps {
                    *t /= curvature;
                }
                Kernel {
                    taps,
                    parity: Parity::Even,
                }
            }
            _ => unreachable!("derivative order validated by caller"),
        }
    }
}

/// Symmetric (half-sample) reflection: `... c b a | a b c ... x y z | z y x ...`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

fn pass_x(src: &GrayImage, kernel: &Kernel) -> GrayImage {
    let (w, h) = src.dims();
    let r = kernel.taps.len() - 1;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each_init(
        || vec![0.0; w + 2 * r],
        |padded, (y, row_out)| {
            let row = &src.data()[y * w..(y + 1) * w];
            for (j, p) in padded.iter_mut().enumerate() {
                *p = row[reflect(j as isize - r as isize, w)];
            }
            for (x, o) in row_out.iter_mut().enumerate() {
                let c = x + r;
                *o = match kernel.parity {
                    Parity::Even => {
                        let mut acc = kernel.taps[0] * padded[c];
                        for k in 1..=r {
                            acc += kernel.taps[k] * (padded[c + k] + padded[c - k]);
                        }
                        acc
                    }
                    Parity::Odd => {
                        let mut acc = 0.0;
                        for k in 1..=r {
                            acc += kernel.taps[k] * (padded[c + k] - padded[c - k]);
                        }
                        acc
                    }
                };
            }
        },
    );
    GrayImage::from_raw(w, h, out)
}

fn pass_y(src: &GrayImage, kernel: &Kernel) -> GrayImage {
    let (w, h) = src.dims();
    let data = src.data();
    let row = |i: isize| &data[reflect(i, h) * w..(reflect(i, h) + 1) * w];
    let mut out = vec![0.0; w * h];
    // Same per-pixel accumulation order as `pass_x`, vectorised across a row.
    out.par_chunks_mut(w).enumerate().for_each(|(y, acc)| {
        let y = y as isize;
        match kernel.parity {
            Parity::Even => {
                for (a, v) in acc.iter_mut().zip(row(y)) {
                    *a = kernel.taps[0] * v;
                }
                for (k, t) in kernel.taps.iter().enumerate().skip(1) {
                    let (up, down) = (row(y + k as isize), row(y - k as isize));
                    for ((a, p), m) in acc.iter_mut().zip(up).zip(down) {
                        *a += t * (p + m);
                    }
                }
            }
            Parity::Odd => {
                for (k, t) in kernel.taps.iter().enumerate().skip(1) {
                    let (up, down) = (row(y + k as isize), row(y - k as isize));
                    for ((a, p), m) in acc.iter_mut().zip(up).zip(down) {
                        *a += t * (p - m);
                    }
                }
            }
        }
    });
    GrayImage::from_raw(w, h, out)
}

fn check_orders(sigma: f64, dx: u8, dy: u8) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    if dx > 2 || dy > 2 || dx + dy > 2 {
        return Err(Error::invalid(format!(
            "derivative orders ({dx}, {dy}) unsupported; need dx, dy <= 2 and dx + dy <= 2"
        )));
    }
    Ok(())
}

/// Gaussian derivative of order `(dx, dy)` at scale `sigma`, with the
/// default truncation.
pub fn gaussian_derivative(img: &GrayImage, sigma: f64, dx: u8, dy: u8) -> Result<GrayImage> {
    gaussian_derivative_with(img, sigma, dx, dy, DEFAULT_TRUNCATION)
}

pub fn gaussian_derivative_with(img: &GrayImage, sigma: f64, dx: u8, dy: u8, truncation: f64) -> Result<GrayImage> {
    check_orders(sigma, dx, dy)?;
    if !(truncation.is_finite() && truncation > 0.0) {
        return Err(Error::invalid("truncation must be positive"));
    }
    let kx = Kernel::new(sigma, dx, truncation);
    let ky = Kernel::new(sigma, dy, truncation);
    // The axis with the higher derivative order is filtered first; equal
    // orders average both pass orders. Transposing the input therefore maps
    // every operation onto its mirror image.
    let out = match dx.cmp(&dy) {
        std::cmp::Ordering::Greater => pass_y(&pass_x(img, &kx), &ky),
        std::cmp::Ordering::Less => pass_x(&pass_y(img, &ky), &kx),
        std::cmp::Ordering::Equal => {
            let a = pass_y(&pass_x(img, &kx), &ky);
            let b = pass_x(&pass_y(img, &ky), &kx);
            let (w, h) = img.dims();
            let data = a.data().iter().zip(b.data()).map(|(p, q)| 0.5 * (p + q)).collect();
            GrayImage::from_raw(w, h, data)
        }
    };
    Ok(out)
}

/// Plain Gaussian smoothing.
///
/// Panics if `sigma` is not positive.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    gaussian_derivative(img, sigma, 0, 0).expect("sigma must be positive")
}

/// Second-order structure at one scale.
#[derive(Debug, Clone)]
pub struct Hessian {
    pub xx: GrayImage,
    pub xy: GrayImage,
    pub yy: GrayImage,
}

/// Gamma-normalised (gamma = 2) Hessian: second derivatives scaled by `sigma^2`.
pub fn hessian_at_scale(img: &GrayImage, sigma: f64) -> Result<Hessian> {
    hessian_at_scale_with(img, sigma, DEFAULT_TRUNCATION)
}

pub fn hessian_at_scale_with(img: &GrayImage, sigma: f64, truncation: f64) -> Result<Hessian> {
    let s2 = sigma * sigma;
    let scale = |g: GrayImage| g.map(|v| v * s2);
    Ok(Hessian {
        xx: scale(gaussian_derivative_with(img, sigma, 2, 0, truncation)?),
        xy: scale(gaussian_derivative_with(img, sigma, 1, 1, truncation)?),
        yy: scale(gaussian_derivative_with(img, sigma, 0, 2, truncation)?),
    })
}
