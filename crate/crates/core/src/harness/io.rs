//! Image, mask and table output.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::ImageFormat;
use crate::renderer::Image;
use crate::visibility::VisibilityMask2D;

const GAMMA: f64 = 2.2;

/// Gamma-encodes a linear value and rounds half up to 8 bits.
pub fn quantize(linear: f64) -> u8 {
    let encoded = linear.clamp(0.0, 1.0).powf(1.0 / GAMMA);
    (255.0 * encoded + 0.5).floor() as u8
}

fn rgb_bytes(image: &Image) -> Vec<u8> {
    image
        .pixels()
        .iter()
        .flat_map(|p| [quantize(p.x), quantize(p.y), quantize(p.z)])
        .collect()
}

/// Binary P6 encoding with maxval 255.
pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(rgb_bytes(image));
    out
}

/// Binary P5 encoding of a mask, linear in [0, 1].
pub fn encode_mask_pgm(mask: &VisibilityMask2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(
        mask.values()
            .iter()
            .map(|&m| (255.0 * m.clamp(0.0, 1.0) + 0.5).floor() as u8),
    );
    out
}

pub fn write_image(image: &Image, path: impl AsRef<Path>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ImageFormat::Ppm => fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e)),
        ImageFormat::Png => {
            let buffer = image::RgbImage::from_raw(image.width() as u32, image.height() as u32, rgb_bytes(image))
                .expect("buffer length matches the image size");
            buffer
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|source| match source {
                    image::ImageError::IoError(e) => Error::io(path, e),
                    source => Error::Encode {
                        path: path.to_path_buf(),
                        source,
                    },
                })
        }
    }
}

pub fn write_mask(mask: &VisibilityMask2D, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_mask_pgm(mask)).map_err(|e| Error::io(path, e))
}
