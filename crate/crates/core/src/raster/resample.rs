use super::{FovMask, RasterImage};
use crate::error::{Error, Result};

/// Crops to the mask's bounding box and resamples to `target x target`
/// with bilinear interpolation on pixel centres.
///
/// Equal source and target sizes reproduce the crop exactly.
pub fn crop_resize(img: &RasterImage, mask: &FovMask, target: usize) -> Result<RasterImage> {
    if target < 16 {
        return Err(Error::invalid(format!("target size must be at least 16, got {target}")));
    }
    if img.dims() != mask.dims() {
        return Err(Error::DimensionMismatch("mask and image differ in size".into()));
    }
    let (x0, y0, x1, y1) = mask.bounding_box();
    let crop = img.crop(x0, y0, x1 - x0, y1 - y0)?;
    Ok(resize_bilinear(&crop, target, target))
}

/// Source coordinate and blend weight for one output index.
fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    if src_len == dst_len {
        return (dst, dst, 0.0);
    }
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

pub(crate) fn resize_bilinear(img: &RasterImage, out_w: usize, out_h: usize) -> RasterImage {
    let (w, h) = img.dims();
    let cols: Vec<_> = (0..out_w).map(|x| sample_axis(x, w, out_w)).collect();
    let rows: Vec<_> = (0..out_h).map(|y| sample_axis(y, h, out_h)).collect();
    RasterImage::from_fn(out_w, out_h, |x, y| {
        let (xl, xh, fx) = cols[x];
        let (yl, yh, fy) = rows[y];
        let (a, b, c, d) = (
            img.pixel(xl, yl),
            img.pixel(xh, yl),
            img.pixel(xl, yh),
            img.pixel(xh, yh),
        );
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] + fx * (b[ch] - a[ch]);
            let bottom = c[ch] + fx * (d[ch] - c[ch]);
            out[ch] = top + fy * (bottom - top);
        }
        out
    })
}
