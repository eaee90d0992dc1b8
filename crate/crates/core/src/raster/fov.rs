use std::collections::VecDeque;

use super::RasterImage;
use crate::error::{Error, Result};

/// Mean-channel threshold separating the illuminated disc from the black border.
pub const DEFAULT_FOV_THRESHOLD: f64 = 0.06;

/// Boolean field-of-view plane with its tight bounding box.
///
/// The box is half-open: `x0 <= x < x1`, `y0 <= y < y1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FovMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
    bbox: (usize, usize, usize, usize),
}

impl FovMask {
    /// Fails with [`Error::EmptyFov`] when no pixel is set.
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for {width}x{height}",
                data.len()
            )));
        }
        let bbox = tight_box(width, height, &data).ok_or(Error::EmptyFov)?;
        Ok(Self {
            width,
            height,
            data,
            bbox,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("non-empty image")
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, data)
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

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn bounding_box(&self) -> (usize, usize, usize, usize) {
        self.bbox
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    /// Blacks out every pixel outside the mask.
    pub fn apply(&self, img: &RasterImage) -> Result<RasterImage> {
        if img.dims() != self.dims() {
            return Err(Error::DimensionMismatch("mask and image differ in size".into()));
        }
        Ok(RasterImage::from_fn(self.width, self.height, |x, y| {
            if self.contains(x, y) {
                img.pixel(x, y)
            } else {
                [0.0; 3]
            }
        }))
    }
}

fn tight_box(width: usize, height: usize, data: &[bool]) -> Option<(usize, usize, usize, usize)> {
    let mut bbox: Option<(usize, usize, usize, usize)> = None;
    for (i, _) in data.iter().enumerate().filter(|(_, v)| **v) {
        let (x, y) = (i % width, i / width);
        bbox = Some(match bbox {
            None => (x, y, x + 1, y + 1),
            Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
        });
    }
    debug_assert!(bbox.is_none_or(|(_, _, x1, y1)| x1 <= width && y1 <= height));
    bbox
}

/// Thresholds the mean channel and keeps the largest 4-connected component.
///
/// Ties between equally large components go to the one met first in raster order.
pub fn detect_fov(img: &RasterImage, luminance_threshold: f64) -> Result<FovMask> {
    if !(luminance_threshold > 0.0 && luminance_threshold < 1.0) {
        return Err(Error::invalid(format!(
            "luminance threshold must lie in (0, 1), got {luminance_threshold}"
        )));
    }
    let (w, h) = img.dims();
    let lum = img.mean_channel();
    let above: Vec<bool> = lum.data().iter().map(|v| *v > luminance_threshold).collect();

    let mut label = vec![0u32; w * h];
    let mut best: Option<(u32, usize)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !above[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0usize;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if above[j] && label[j] == 0 {
                    label[j] = next;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((next, size));
        }
    }
    let (keep, _) = best.ok_or(Error::EmptyFov)?;
    FovMask::new(w, h, label.iter().map(|l| *l == keep).collect())
}

/// Square erosion: a pixel survives when every pixel within Chebyshev
/// distance `radius` lies inside both the image and the mask.
///
/// Returns `None` if nothing survives.
pub fn erode_mask(mask: &FovMask, radius: usize) -> Option<FovMask> {
    if radius == 0 {
        return Some(mask.clone());
    }
    let (w, h) = mask.dims();
    let span = 2 * radius + 1;
    // Horizontal pass: run of set pixels centred on x.
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = &mask.data[y * w..(y + 1) * w];
        let mut prefix = vec![0usize; w + 1];
        for x in 0..w {
            prefix[x + 1] = prefix[x] + usize::from(row[x]);
        }
        for x in radius..w.saturating_sub(radius) {
            horiz[y * w + x] = prefix[x + radius + 1] - prefix[x - radius] == span;
        }
    }
    let mut out = vec![false; w * h];
    for x in 0..w {
        let mut prefix = vec![0usize; h + 1];
        for y in 0..h {
            prefix[y + 1] = prefix[y] + usize::from(horiz[y * w + x]);
        }
        for y in radius..h.saturating_sub(radius) {
            out[y * w + x] = prefix[y + radius + 1] - prefix[y - radius] == span;
        }
    }
    FovMask::new(w, h, out).ok()
}
