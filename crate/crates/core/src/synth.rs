//! Seeded synthetic fundus photographs with known vessel ground truth.
//!
//! The renderer produces a circular field of view on a black border, an
//! orange-red background with vignetting and low-frequency mottling, a
//! bright optic disc, a darker macula and a branching tree of dark vessels
//! that taper away from the disc. Everything is driven by a single seed so
//! fixtures are reproducible across runs and platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{gaussian_blur, FovMask, GrayImage, RasterImage};

/// Knobs for [`render_fundus`]. Lengths are in pixels at the chosen size.
#[derive(Debug, Clone, PartialEq)]
pub struct FundusSpec {
    pub size: usize,
    /// Number of primary vessels leaving the optic disc.
    pub trunks: usize,
    /// Vessel width at the disc.
    pub trunk_width: f64,
    /// Fractional green-channel darkening at the vessel core.
    pub vessel_contrast: f64,
    /// Standard deviation of additive sensor noise.
    pub noise_sigma: f64,
    /// Amplitude of the background mottling.
    pub texture_amplitude: f64,
}

impl FundusSpec {
    pub fn new(size: usize) -> Self {
        let scale = size as f64 / 512.0;
        Self {
            size,
            trunks: 8,
            trunk_width: (7.0 * scale).max(2.5),
            vessel_contrast: 0.45,
            noise_sigma: 0.004,
            texture_amplitude: 0.06,
        }
    }
}

/// A rendered fixture and its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticFundus {
    pub image: RasterImage,
    /// Pixels whose centre lies within half a vessel width of a centreline.
    pub vessels: Vec<bool>,
    pub fov: FovMask,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
    width: f64,
}

fn grow_tree(rng: &mut ChaCha8Rng, spec: &FundusSpec, disc: (f64, f64), radius: f64) -> Vec<Segment> {
    let mut segments = Vec::new();
    let step = (spec.size as f64 / 128.0).max(1.5);
    // (x, y, heading, width, remaining length)
    let mut stack: Vec<(f64, f64, f64, f64, f64)> = (0..spec.trunks)
        .map(|i| {
            let base = std::f64::consts::TAU * (i as f64 + rng.random::<f64>() * 0.6) / spec.trunks as f64;
            let len = radius * rng.random_range(1.1..1.9);
            (
                disc.0,
                disc.1,
                base,
                spec.trunk_width * rng.random_range(0.75..1.0),
                len,
            )
        })
        .collect();
    let min_width = (spec.trunk_width * 0.25).max(1.2);
    while let Some((mut x, mut y, mut heading, mut width, mut remaining)) = stack.pop() {
        let mut turn = 0.0f64;
        while remaining > 0.0 && width >= min_width {
            turn = 0.8 * turn + rng.random_range(-0.10..0.10);
            heading += turn;
            let (nx, ny) = (x + step * heading.cos(), y + step * heading.sin());
            let next_width = width * (1.0 - 0.004 * step);
            segments.push(Segment {
                ax: x,
                ay: y,
                bx: nx,
                by: ny,
                width,
            });
            x = nx;
            y = ny;
            width = next_width;
            remaining -= step;
            if rng.random::<f64>() < 0.018 * step && width > 1.6 * min_width {
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                stack.push((
                    x,
                    y,
                    heading + side * rng.random_range(0.5..1.1),
                    width * 0.7,
                    remaining * rng.random_range(0.4..0.8),
                ));
                width *= 0.85;
            }
        }
    }
    segments
}

fn smooth_field(rng: &mut ChaCha8Rng, size: usize, correlation: f64) -> GrayImage {
    let white = GrayImage::from_fn(size, size, |_, _| rng.random::<f64>() - 0.5);
    let blurred = gaussian_blur(&white, correlation);
    let peak = blurred.data().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    blurred.map(|v| v / peak)
}

/// Renders one fixture.
pub fn render_fundus(spec: &FundusSpec, seed: u64) -> SyntheticFundus {
    let n = spec.size;
    let s = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = (s / 2.0, s / 2.0);
    let fov_radius = 0.46 * s;
    let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let disc = (
        centre.0 + side * 0.22 * s + rng.random_range(-0.02..0.02) * s,
        centre.1 + rng.random_range(-0.04..0.04) * s,
    );
    let disc_radius = 0.075 * s;
    let macula = (centre.0 - side * 0.08 * s, centre.1 + rng.random_range(-0.02..0.02) * s);

    let segments = grow_tree(&mut rng, spec, disc, fov_radius);
    let mut strength = vec![0.0f64; n * n];
    let mut truth = vec![false; n * n];
    for seg in &segments {
        let half = seg.width / 2.0;
        let pad = half + 2.0;
        let x0 = (seg.ax.min(seg.bx) - pad).floor().max(0.0) as usize;
        let y0 = (seg.ay.min(seg.by) - pad).floor().max(0.0) as usize;
        let x1 = ((seg.ax.max(seg.bx) + pad).ceil() as usize).min(n);
        let y1 = ((seg.ay.max(seg.by) + pad).ceil() as usize).min(n);
        let (dx, dy) = (seg.bx - seg.ax, seg.by - seg.ay);
        let len2 = (dx * dx + dy * dy).max(1e-12);
        for py in y0..y1 {
            for px in x0..x1 {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                let t = (((cx - seg.ax) * dx + (cy - seg.ay) * dy) / len2).clamp(0.0, 1.0);
                let (qx, qy) = (seg.ax + t * dx - cx, seg.ay + t * dy - cy);
                let d = (qx * qx + qy * qy).sqrt();
                // anti-aliased edge, slightly rounded core
                let edge = (half + 0.5 - d).clamp(0.0, 1.0);
                let core = 1.0 - 0.25 * (d / half.max(0.5)).min(1.0).powi(2);
                let v = edge * core;
                let i = py * n + px;
                strength[i] = strength[i].max(v);
                if d <= half {
                    truth[i] = true;
                }
            }
        }
    }

    let mottle = smooth_field(&mut rng, n, s / 40.0);
    let fine = smooth_field(&mut rng, n, s / 128.0);
    let tint: [f64; 3] = [
        rng.random_range(0.70..0.85),
        rng.random_range(0.33..0.42),
        rng.random_range(0.12..0.20),
    ];
    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");

    let mut fov_data = vec![false; n * n];
    let mut data = Vec::with_capacity(n * n * 3);
    for y in 0..n {
        for x in 0..n {
            let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
            let r = ((cx - centre.0).powi(2) + (cy - centre.1).powi(2)).sqrt();
            let i = y * n + x;
            if r > fov_radius {
                data.extend_from_slice(&[0.0, 0.0, 0.0]);
                truth[i] = false;
                continue;
            }
            fov_data[i] = true;
            let vignette = 1.0 - 0.35 * (r / fov_radius).powi(2);
            let dd = ((cx - disc.0).powi(2) + (cy - disc.1).powi(2)).sqrt() / disc_radius;
            let disc_glow = (-dd * dd * 1.5).exp();
            let dm = ((cx - macula.0).powi(2) + (cy - macula.1).powi(2)).sqrt() / (0.09 * s);
            let macula_shade = 0.35 * (-dm * dm).exp();
            let tex = 1.0 + spec.texture_amplitude * (mottle.get(x, y) + 0.5 * fine.get(x, y));
            let v = strength[i];
            let mut px = [0.0; 3];
            for c in 0..3 {
                let base = tint[c] * vignette * tex * (1.0 - macula_shade);
                let glow = disc_glow * [0.25, 0.45, 0.35][c];
                let darken = 1.0 - spec.vessel_contrast * [0.35, 1.0, 0.6][c] * v;
                px[c] = (base + glow) * darken + noise.sample(&mut rng);
            }
            data.extend(px.iter().map(|p| p.clamp(0.0, 1.0)));
        }
    }
    SyntheticFundus {
        image: RasterImage::new(n, n, data).expect("values clamped into range"),
        vessels: truth,
        fov: FovMask::new(n, n, fov_data).expect("disc is non-empty"),
    }
}

/// Defocus blur of all channels inside the field of view; the black border
/// is restored afterwards.
pub fn defocus(img: &RasterImage, fov: &FovMask, sigma: f64) -> RasterImage {
    let blurred = img.blurred(sigma);
    fov.apply(&blurred).expect("mask matches image")
}

/// Independent per-channel Gaussian noise inside the field of view.
pub fn chroma_noise(img: &RasterImage, fov: &FovMask, sigma: f64, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("finite sigma");
    let (w, h) = img.dims();
    RasterImage::from_fn(w, h, |x, y| {
        let p = img.pixel(x, y);
        if fov.contains(x, y) {
            [
                p[0] + noise.sample(&mut rng),
                p[1] + noise.sample(&mut rng),
                p[2] + noise.sample(&mut rng),
            ]
        } else {
            p
        }
    })
}

/// Multiplicative illumination gradient across the field of view, as seen
/// in poorly aligned acquisitions.
pub fn uneven_illumination(img: &RasterImage, strength: f64, angle: f64) -> RasterImage {
    let (w, h) = img.dims();
    let (c, s) = (angle.cos(), angle.sin());
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let u = ((x as f64 / w as f64 - 0.5) * c + (y as f64 / h as f64 - 0.5) * s) * 2.0;
            let gain = 1.0 - strength * (0.5 + 0.5 * u).clamp(0.0, 1.0);
            let p = img.pixel(x, y);
            out.set_pixel(x, y, [p[0] * gain, p[1] * gain, p[2] * gain]);
        }
    }
    out
}

/// A mixed degradation of the kind used to train and test quality
/// classifiers: strong defocus, chroma noise and an illumination gradient,
/// with seeded severities.
pub fn degrade(img: &RasterImage, fov: &FovMask, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_deba_5e00);
    let sigma = rng.random_range(3.0..6.0) * img.width() as f64 / 512.0;
    let blurred = defocus(img, fov, sigma.max(1.0));
    let noisy = chroma_noise(&blurred, fov, rng.random_range(0.02..0.05), rng.random());
    let lit = uneven_illumination(
        &noisy,
        rng.random_range(0.2..0.6),
        rng.random_range(0.0..std::f64::consts::TAU),
    );
    fov.apply(&lit).expect("mask matches image")
}
