use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::RasterImage;
use crate::error::{Error, Result};

/// Reads a PNG (8/16-bit) or binary PPM file into a [`RasterImage`].
///
/// Samples are divided by the bit-depth maximum (255 or 65535). Grey and
/// alpha variants are accepted: grey is replicated, alpha dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: "zero-sized image".into(),
        });
    }
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => decoded
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 255.0)
            .collect(),
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => decoded
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| f64::from(v) / 65535.0)
            .collect(),
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!("unsupported pixel format {:?}", other.color()),
            })
        }
    };
    RasterImage::new(w, h, data)
}

/// Writes an 8-bit RGB PNG.
pub fn save_png(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = img.data().iter().map(|v| (v * 255.0).round() as u8).collect();
    let buffer = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer sized from image dimensions");
    buffer
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Encode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}
