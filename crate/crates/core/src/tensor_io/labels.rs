use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageReader, Luma};

use crate::error::{Error, Result};

/// Cityscapes-style ignore label.
pub const DEFAULT_IGNORE_INDEX: u16 = 255;

/// Ground-truth class ids, row-major, with an ignore label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Vec<u16>,
    height: usize,
    width: usize,
    ignore_index: u16,
    num_classes: usize,
}

impl LabelMap {
    pub fn new(
        labels: Vec<u16>,
        height: usize,
        width: usize,
        ignore_index: u16,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape {
                expected: (height, width),
                actual: (labels.len() / width.max(1), width),
            });
        }
        if let Some(i) = labels
            .iter()
            .position(|&l| l != ignore_index && usize::from(l) >= num_classes)
        {
            return Err(Error::LabelRange {
                value: u32::from(labels[i]),
                row: i / width,
                col: i % width,
                num_classes,
            });
        }
        Ok(Self {
            labels,
            height,
            width,
            ignore_index,
            num_classes,
        })
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn ignore_index(&self) -> u16 {
        self.ignore_index
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_valid(&self, index: usize) -> bool {
        self.labels[index] != self.ignore_index
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.labels
            .iter()
            .map(|&l| l != self.ignore_index)
            .collect()
    }

    pub fn num_valid(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l != self.ignore_index)
            .count()
    }
}

/// Reads an 8- or 16-bit single-channel PNG as class ids.
pub fn load_label_map(path: &Path, ignore_index: u16, num_classes: usize) -> Result<LabelMap> {
    let display = path.display().to_string();
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Format {
            path: display.clone(),
            reason: e.to_string(),
        })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u16> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => {
            return Err(Error::Format {
                path: display,
                reason: format!(
                    "label image must be single-channel, found {:?}",
                    other.color()
                ),
            })
        }
    };
    LabelMap::new(labels, height, width, ignore_index, num_classes)
}

/// Writes an 8-bit PNG when every id fits, 16-bit otherwise.
pub fn save_label_map(map: &LabelMap, path: &Path) -> Result<()> {
    let (w, h) = (map.width as u32, map.height as u32);
    let wide = map.num_classes > 255 || map.labels.iter().any(|&l| l > 255);
    let result = if wide {
        ImageBuffer::<Luma<u16>, _>::from_raw(w, h, map.labels.clone())
            .expect("buffer length checked at construction")
            .save_with_format(path, image::ImageFormat::Png)
    } else {
        let bytes: Vec<u8> = map.labels.iter().map(|&l| l as u8).collect();
        ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer length checked at construction")
            .save_with_format(path, image::ImageFormat::Png)
    };
    result.map_err(|e| Error::image(path, e))
}
