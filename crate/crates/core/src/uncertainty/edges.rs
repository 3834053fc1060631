//! Scharr gradient magnitude, the image-only edge baseline.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::normalize_unit;
use crate::error::{Error, Result};
use crate::tensor_io::UncertaintyMap;

/// ITU-R BT.601 luma weights used when converting colour images.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Horizontal-gradient kernel; the vertical one is its transpose.
pub const SCHARR_X: [[f64; 3]; 3] = [[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]];

/// Single-channel intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Vec<f32>,
    height: usize,
    width: usize,
}

impl GrayImage {
    pub fn new(pixels: Vec<f32>, height: usize, width: usize) -> Result<Self> {
        if pixels.len() != height * width || height == 0 || width == 0 {
            return Err(Error::Invariant(format!(
                "gray image {height}x{width} cannot hold {} pixels",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invariant(format!("gray value {v} outside [0, 1]")));
        }
        Ok(Self {
            pixels,
            height,
            width,
        })
    }

    /// Luma of any decoded image, scaled by the channel's full range.
    pub fn from_dynamic(img: &DynamicImage) -> Self {
        let (width, height) = (img.width() as usize, img.height() as usize);
        let pixels = match img {
            DynamicImage::ImageLuma8(buf) => {
                buf.pixels().map(|p| f32::from(p.0[0]) / 255.0).collect()
            }
            DynamicImage::ImageLuma16(buf) => {
                buf.pixels().map(|p| f32::from(p.0[0]) / 65535.0).collect()
            }
            other => other
                .to_rgb32f()
                .pixels()
                .map(|p| {
                    let y: f64 =
                        p.0.iter()
                            .zip(LUMA_WEIGHTS)
                            .map(|(&c, w)| f64::from(c) * w)
                            .sum();
                    y.clamp(0.0, 1.0) as f32
                })
                .collect(),
        };
        Self {
            pixels,
            height,
            width,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::Format {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Unscaled Scharr gradient magnitude with replicate border padding.
pub fn scharr_gradient(image: &GrayImage) -> Vec<f32> {
    let (h, w) = (image.height, image.width);
    let px = |r: isize, c: isize| -> f64 {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        f64::from(image.pixels[r * w + c])
    };
    let mut out = vec![0f32; h * w];
    for r in 0..h {
        for c in 0..w {
            let (r, c) = (r as isize, c as isize);
            // weights 3, 10, 3 across the perpendicular direction
            let gx = 3.0 * (px(r - 1, c - 1) - px(r - 1, c + 1))
                + 10.0 * (px(r, c - 1) - px(r, c + 1))
                + 3.0 * (px(r + 1, c - 1) - px(r + 1, c + 1));
            let gy = 3.0 * (px(r - 1, c - 1) - px(r + 1, c - 1))
                + 10.0 * (px(r - 1, c) - px(r + 1, c))
                + 3.0 * (px(r - 1, c + 1) - px(r + 1, c + 1));
            out[r as usize * w + c as usize] = (gx * gx + gy * gy).sqrt() as f32;
        }
    }
    out
}

/// Scharr edges min-max scaled to `[0, 1]`.
pub fn scharr_magnitude(image: &GrayImage) -> UncertaintyMap {
    let raw = UncertaintyMap::dense(scharr_gradient(image), image.height, image.width);
    normalize_unit(&raw)
}
