//! Conditional adversarial and combined loss evaluators, and the patch grid
//! of a patch-level discriminator.
//!
//! For a vessel tree `v`, its real retina `r` and a generated image `G(v)`:
//!
//! ```text
//! L_adv = mean log D(v, r) + mean log(1 - D(v, G(v)))
//! L     = L_adv + lambda * mean |r - G(v)|
//! ```
//!
//! Discriminator outputs are grids of per-patch probabilities, clamped to
//! `[eps, 1 - eps]` before taking logarithms.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{load_image, RasterImage};
use crate::vesselness::BinaryVesselTree;

pub const DEFAULT_LAMBDA: f64 = 100.0;
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Square grid of overlapping square patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    image_size: usize,
    patch_size: usize,
    axis_origins: Vec<usize>,
}

impl PatchGrid {
    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn grid_rows(&self) -> usize {
        self.axis_origins.len()
    }

    pub fn grid_cols(&self) -> usize {
        self.axis_origins.len()
    }

    /// Origins along one axis, shared by rows and columns.
    pub fn axis_origins(&self) -> &[usize] {
        &self.axis_origins
    }

    /// All `(x, y)` origins, row by row.
    pub fn origins(&self) -> Vec<(usize, usize)> {
        self.axis_origins
            .iter()
            .flat_map(|&y| self.axis_origins.iter().map(move |&x| (x, y)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.axis_origins.len() * self.axis_origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axis_origins.is_empty()
    }
}

/// `grid_dim` origins per axis at `round(i * (image_size - patch_size) / (grid_dim - 1))`,
/// so the first patch starts at 0 and the last ends at the image edge.
pub fn patch_grid(image_size: usize, patch_size: usize, grid_dim: usize) -> Result<PatchGrid> {
    if patch_size == 0 || grid_dim == 0 {
        return Err(Error::invalid("patch size and grid dimension must be positive"));
    }
    if patch_size > image_size {
        return Err(Error::invalid(format!(
            "patch of {patch_size} px does not fit a {image_size} px image"
        )));
    }
    let span = (image_size - patch_size) as u128;
    let axis_origins = if grid_dim == 1 {
        vec![0]
    } else {
        let den = (grid_dim - 1) as u128;
        // round half up in integers
        (0..grid_dim as u128)
            .map(|i| ((2 * i * span + den) / (2 * den)) as usize)
            .collect()
    };
    Ok(PatchGrid {
        image_size,
        patch_size,
        axis_origins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    lambda: f64,
    epsilon_clamp: f64,
}

impl LossConfig {
    pub fn new(lambda: f64, epsilon_clamp: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if !(epsilon_clamp > 0.0 && epsilon_clamp < 0.5) {
            return Err(Error::invalid(format!(
                "epsilon must be in (0, 0.5), got {epsilon_clamp}"
            )));
        }
        Ok(Self { lambda, epsilon_clamp })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn epsilon_clamp(&self) -> f64 {
        self.epsilon_clamp
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            epsilon_clamp: DEFAULT_EPSILON,
        }
    }
}

/// Per-patch discriminator probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorField {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DiscriminatorField {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("discriminator grid must be at least 1x1"));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("discriminator probabilities must lie in [0, 1]"));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn constant(rows: usize, cols: usize, p: f64) -> Result<Self> {
        Self::new(rows, cols, vec![p; rows * cols])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mean of `f(clamp(p))` over the grid.
    fn mean_log(&self, eps: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.values.iter().map(|p| f(p.clamp(eps, 1.0 - eps)).ln()).sum::<f64>() / self.values.len() as f64
    }

    /// Reads the CSV layout `rows,cols` / `<rows>,<cols>` / row-major values.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Csv(format!("{}: {msg}", path.display()));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| bad("empty file"))?
            .split(',')
            .map(str::trim)
            .collect();
        if header != ["rows", "cols"] {
            return Err(bad("header must be `rows,cols`"));
        }
        let dims: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing dimensions"))?
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad("bad dimension")))
            .collect::<Result<_>>()?;
        let [rows, cols] = dims[..] else {
            return Err(bad("dimension line needs two values"));
        };
        let values = lines
            .flat_map(|l| l.split(','))
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| bad(&format!("bad value `{}`", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows, cols, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = format!("rows,cols\n{},{}\n", self.rows, self.cols);
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `mean log D(v, r) + mean log(1 - D(v, G(v)))` with clamped probabilities.
pub fn adversarial_loss(d_real: &DiscriminatorField, d_fake: &DiscriminatorField, cfg: &LossConfig) -> Result<f64> {
    if d_real.shape() != d_fake.shape() {
        return Err(Error::DimensionMismatch(format!(
            "discriminator grids {:?} and {:?} differ",
            d_real.shape(),
            d_fake.shape()
        )));
    }
    let eps = cfg.epsilon_clamp;
    Ok(d_real.mean_log(eps, |p| p) + d_fake.mean_log(eps, |p| 1.0 - p))
}

/// Expectation over a batch: the mean of the per-pair losses.
pub fn adversarial_loss_batch(pairs: &[(DiscriminatorField, DiscriminatorField)], cfg: &LossConfig) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let total = pairs
        .iter()
        .map(|(r, f)| adversarial_loss(r, f, cfg))
        .sum::<Result<f64>>()?;
    Ok(total / pairs.len() as f64)
}

/// Mean absolute difference over all pixels and channels.
pub fn l1_term(r: &RasterImage, g: &RasterImage) -> Result<f64> {
    if r.dims() != g.dims() {
        return Err(Error::DimensionMismatch(format!(
            "images {:?} and {:?} differ",
            r.dims(),
            g.dims()
        )));
    }
    let sum: f64 = r.data().iter().zip(g.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(sum / r.data().len() as f64)
}

/// `adv + lambda * l1`.
///
/// # Panics
/// If `l1` is negative or NaN.
pub fn combined_loss(adv: f64, l1: f64, cfg: &LossConfig) -> f64 {
    assert!(l1 >= 0.0, "L1 term must be non-negative, got {l1}");
    if cfg.lambda == 0.0 {
        return adv;
    }
    adv + cfg.lambda * l1
}

/// One `(v, r, G(v))` triple on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleEntry {
    pub id: String,
    pub vessel_path: PathBuf,
    pub real_path: PathBuf,
    pub generated_path: PathBuf,
    /// Discriminator fields for `(v, r)` and `(v, G(v))`, when available.
    pub d_real_csv: Option<PathBuf>,
    pub d_fake_csv: Option<PathBuf>,
}

/// Supplies discriminator fields for a triple.
pub trait DiscriminatorSource: Sync {
    fn fields(&self, entry: &TripleEntry) -> Result<(DiscriminatorField, DiscriminatorField)>;
}

/// A discriminator that answers `p` on every patch of a `rows x cols` grid.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDiscriminator {
    pub p: f64,
    pub rows: usize,
    pub cols: usize,
}

impl Default for ConstantDiscriminator {
    /// The uninformed 0.5 baseline on a 16x16 grid.
    fn default() -> Self {
        Self {
            p: 0.5,
            rows: 16,
            cols: 16,
        }
    }
}

impl DiscriminatorSource for ConstantDiscriminator {
    fn fields(&self, _entry: &TripleEntry) -> Result<(DiscriminatorField, DiscriminatorField)> {
        let f = DiscriminatorField::constant(self.rows, self.cols, self.p)?;
        Ok((f.clone(), f))
    }
}

/// Reads the CSV fields named in each entry, falling back to `fallback`
/// when an entry names none.
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvDiscriminator {
    pub fallback: ConstantDiscriminator,
}

impl DiscriminatorSource for CsvDiscriminator {
    fn fields(&self, entry: &TripleEntry) -> Result<(DiscriminatorField, DiscriminatorField)> {
        match (&entry.d_real_csv, &entry.d_fake_csv) {
            (Some(r), Some(f)) => Ok((DiscriminatorField::read_csv(r)?, DiscriminatorField::read_csv(f)?)),
            (None, None) => self.fallback.fields(entry),
            _ => Err(Error::invalid(format!(
                "{}: both discriminator fields are required",
                entry.id
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripleScore {
    pub l1: f64,
    pub adversarial: f64,
    pub combined: f64,
}

#[derive(Debug)]
pub struct TripleOutcome {
    pub id: String,
    pub result: Result<TripleScore>,
}

#[derive(Debug)]
pub struct TripleReport {
    /// One outcome per entry, in input order.
    pub outcomes: Vec<TripleOutcome>,
    /// Means over the successful entries; `None` when every entry failed.
    pub mean: Option<TripleScore>,
    pub config: LossConfig,
}

fn score_one(entry: &TripleEntry, cfg: &LossConfig, source: &dyn DiscriminatorSource) -> Result<TripleScore> {
    let v = BinaryVesselTree::load(&entry.vessel_path)?;
    let r = load_image(&entry.real_path)?;
    let g = load_image(&entry.generated_path)?;
    if v.dims() != r.dims() {
        return Err(Error::DimensionMismatch(format!(
            "vessel tree {:?} and retina {:?} differ",
            v.dims(),
            r.dims()
        )));
    }
    let l1 = l1_term(&r, &g)?;
    let (d_real, d_fake) = source.fields(entry)?;
    let adversarial = adversarial_loss(&d_real, &d_fake, cfg)?;
    Ok(TripleScore {
        l1,
        adversarial,
        combined: combined_loss(adversarial, l1, cfg),
    })
}

/// Scores every triple; failures are recorded per entry and do not stop the batch.
pub fn score_triples(entries: &[TripleEntry], cfg: &LossConfig, source: &dyn DiscriminatorSource) -> TripleReport {
    let outcomes: Vec<TripleOutcome> = entries
        .par_iter()
        .map(|e| TripleOutcome {
            id: e.id.clone(),
            result: score_one(e, cfg, source),
        })
        .collect();
    let ok: Vec<&TripleScore> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let mean = (!ok.is_empty()).then(|| {
        let n = ok.len() as f64;
        TripleScore {
            l1: ok.iter().map(|s| s.l1).sum::<f64>() / n,
            adversarial: ok.iter().map(|s| s.adversarial).sum::<f64>() / n,
            combined: ok.iter().map(|s| s.combined).sum::<f64>() / n,
        }
    });
    TripleReport {
        outcomes,
        mean,
        config: *cfg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN_HALF_TWICE: f64 = -1.386_294_361_119_890_6;
    const LN_QUARTER_TWICE: f64 = -2.772_588_722_239_781;

    fn field(p: f64) -> DiscriminatorField {
        DiscriminatorField::constant(16, 16, p).unwrap()
    }

    #[test]
    fn grid_512_63_16_geometry() {
        let g = patch_grid(512, 63, 16).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.axis_origins()[0], 0);
        assert_eq!(*g.axis_origins().last().unwrap(), 449);
        let gaps: Vec<usize> = g.axis_origins().windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(gaps.iter().max(), Some(&30));
        let mut covered = [false; 512];
        for &o in g.axis_origins() {
            covered[o..o + 63].iter_mut().for_each(|c| *c = true);
        }
        assert!(covered.iter().all(|c| *c));
        let single = patch_grid(64, 64, 1).unwrap();
        assert_eq!(single.origins(), vec![(0, 0)]);
        assert!(patch_grid(32, 33, 4).is_err());
        assert!(patch_grid(32, 8, 0).is_err());
    }

    #[test]
    fn analytic_constant_fields() {
        let cfg = LossConfig::default();
        assert!((adversarial_loss(&field(0.5), &field(0.5), &cfg).unwrap() - LN_HALF_TWICE).abs() < 1e-12);
        assert!((adversarial_loss(&field(0.25), &field(0.75), &cfg).unwrap() - LN_QUARTER_TWICE).abs() < 1e-12);
        let eps = cfg.epsilon_clamp();
        let perfect = adversarial_loss(&field(1.0 - eps), &field(eps), &cfg).unwrap();
        assert!(perfect.abs() <= 2.0 * (1.0 - eps).ln().abs() + 1e-15);
        // 0 and 1 are clamped instead of producing infinities
        assert!(adversarial_loss(&field(0.0), &field(1.0), &cfg).unwrap().is_finite());
        let small = DiscriminatorField::constant(2, 2, 0.5).unwrap();
        assert!(adversarial_loss(&field(0.5), &small, &cfg).is_err());
    }

    #[test]
    fn constant_fields_peak_at_perfect_discrimination() {
        let cfg = LossConfig::default();
        let best = adversarial_loss(&field(1.0), &field(0.0), &cfg).unwrap();
        for i in 0..=20 {
            for j in 0..=20 {
                let v = adversarial_loss(&field(i as f64 / 20.0), &field(j as f64 / 20.0), &cfg).unwrap();
                assert!(v <= best);
            }
        }
    }

    #[test]
    fn combined_loss_arithmetic() {
        let cfg = LossConfig::default();
        assert!((combined_loss(LN_HALF_TWICE, 0.01, &cfg) - (-0.386_294_361_119_890_6)).abs() < 1e-12);
        let zero = LossConfig::new(0.0, 1e-7).unwrap();
        assert_eq!(combined_loss(-1.25, 0.3, &zero), -1.25);
        assert_eq!(combined_loss(-1.25, 0.0, &cfg), -1.25);
        assert!(LossConfig::new(-1.0, 1e-7).is_err());
        assert!(LossConfig::new(1.0, 0.5).is_err());
    }

    #[test]
    fn l1_examples() {
        let ones = RasterImage::filled(4, 3, [1.0; 3]);
        let zeros = RasterImage::filled(4, 3, [0.0; 3]);
        assert_eq!(l1_term(&ones, &zeros).unwrap(), 1.0);
        assert_eq!(l1_term(&ones, &ones).unwrap(), 0.0);
        assert!(l1_term(&ones, &RasterImage::filled(3, 4, [1.0; 3])).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let f = DiscriminatorField::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        f.write_csv(&path).unwrap();
        assert_eq!(DiscriminatorField::read_csv(&path).unwrap(), f);
        std::fs::write(&path, "rows,cols\n2,2\n0.1,0.2\n0.3\n").unwrap();
        assert!(DiscriminatorField::read_csv(&path).is_err());
        std::fs::write(&path, "r,c\n1,1\n0.5\n").unwrap();
        assert!(DiscriminatorField::read_csv(&path).is_err());
    }

    fn image(w: usize, h: usize) -> impl Strategy<Value = RasterImage> {
        prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |d| RasterImage::new(w, h, d).unwrap())
    }

    proptest! {
        #[test]
        fn grid_covers_both_ends(size in 1usize..2000, patch_frac in 0.01f64..1.0, dim in 1usize..40) {
            let patch = ((size as f64 * patch_frac) as usize).max(1);
            let g = patch_grid(size, patch, dim).unwrap();
            let o = g.axis_origins();
            prop_assert_eq!(o.len(), dim);
            prop_assert_eq!(o[0], 0);
            if dim > 1 {
                prop_assert_eq!(*o.last().unwrap(), size - patch);
            }
            prop_assert!(o.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(o.iter().all(|x| x + patch <= size));
        }

        #[test]
        fn role_swap_symmetry(real in prop::collection::vec(0.0f64..=1.0, 12), fake in prop::collection::vec(0.0f64..=1.0, 12)) {
            let cfg = LossConfig::default();
            let r = DiscriminatorField::new(3, 4, real.clone()).unwrap();
            let f = DiscriminatorField::new(3, 4, fake.clone()).unwrap();
            let r2 = DiscriminatorField::new(3, 4, fake.iter().map(|p| 1.0 - p).collect()).unwrap();
            let f2 = DiscriminatorField::new(3, 4, real.iter().map(|p| 1.0 - p).collect()).unwrap();
            let a = adversarial_loss(&r, &f, &cfg).unwrap();
            let b = adversarial_loss(&r2, &f2, &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn l1_is_a_metric(a in image(3, 2), b in image(3, 2), c in image(3, 2)) {
            let ab = l1_term(&a, &b).unwrap();
            prop_assert_eq!(ab, l1_term(&b, &a).unwrap());
            prop_assert_eq!(l1_term(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
            prop_assert!(ab <= l1_term(&a, &c).unwrap() + l1_term(&c, &b).unwrap() + 1e-12);
        }
    }
}
