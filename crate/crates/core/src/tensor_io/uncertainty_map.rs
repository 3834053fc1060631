use std::path::Path;

use super::npy;
use crate::error::{Error, Result};

/// Per-pixel scalar uncertainty with a validity mask (false at ignored pixels).
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    values: Vec<f32>,
    valid: Vec<bool>,
    height: usize,
    width: usize,
}

impl UncertaintyMap {
    pub fn new(values: Vec<f32>, valid: Vec<bool>, height: usize, width: usize) -> Result<Self> {
        let n = height * width;
        if values.len() != n || valid.len() != n {
            return Err(Error::Invariant(format!(
                "uncertainty map of {}x{} needs {n} values and mask entries, got {} and {}",
                height,
                width,
                values.len(),
                valid.len()
            )));
        }
        if let Some(i) = values
            .iter()
            .zip(&valid)
            .position(|(v, &ok)| ok && !v.is_finite())
        {
            return Err(Error::Invariant(format!(
                "non-finite uncertainty {} at valid pixel (row {}, col {})",
                values[i],
                i / width,
                i % width
            )));
        }
        Ok(Self {
            values,
            valid,
            height,
            width,
        })
    }

    /// A map where every pixel is valid. Metric kernels produce these.
    pub(crate) fn dense(values: Vec<f32>, height: usize, width: usize) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self {
            valid: vec![true; values.len()],
            values,
            height,
            width,
        }
    }

    pub(crate) fn from_parts_unchecked(
        values: Vec<f32>,
        valid: Vec<bool>,
        height: usize,
        width: usize,
    ) -> Self {
        Self {
            values,
            valid,
            height,
            width,
        }
    }

    /// Intersects the validity mask with `mask` (e.g. the non-ignored pixels of a label map).
    pub fn restricted_to(mut self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.values.len() {
            return Err(Error::Shape {
                expected: (self.height, self.width),
                actual: (mask.len() / self.width.max(1), self.width),
            });
        }
        for (v, &m) in self.valid.iter_mut().zip(mask) {
            *v &= m;
        }
        Ok(self)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Values at valid pixels, in row-major order.
    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .filter_map(|(&v, &ok)| ok.then_some(v))
    }

    /// Smallest and largest valid value, if any pixel is valid.
    pub fn valid_range(&self) -> Option<(f32, f32)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

/// Stored as a `(2, H, W)` float32 array: plane 0 holds the values, plane 1
/// holds the validity mask as 1.0 / 0.0.
pub fn save_uncertainty_map(map: &UncertaintyMap, path: &Path) -> Result<()> {
    if let Some(i) = map
        .values
        .iter()
        .zip(&map.valid)
        .position(|(v, &ok)| ok && !v.is_finite())
    {
        return Err(Error::Invariant(format!(
            "refusing to save non-finite value {} at valid pixel {i}",
            map.values[i]
        )));
    }
    let mut data = Vec::with_capacity(2 * map.values.len());
    data.extend_from_slice(&map.values);
    data.extend(map.valid.iter().map(|&v| if v { 1.0f32 } else { 0.0 }));
    npy::write_f32_array(path, &[2, map.height, map.width], &data)
}

pub fn load_uncertainty_map(path: &Path) -> Result<UncertaintyMap> {
    let (shape, mut data) = npy::read_f32_array(path)?;
    let display = path.display().to_string();
    let &[2, h, w] = shape.as_slice() else {
        return Err(Error::Format {
            path: display,
            reason: format!("expected a (2, H, W) uncertainty array, found shape {shape:?}"),
        });
    };
    let mask = data.split_off(h * w);
    let mut valid = Vec::with_capacity(mask.len());
    for m in mask {
        match m {
            1.0 => valid.push(true),
            0.0 => valid.push(false),
            other => {
                return Err(Error::Format {
                    path: display,
                    reason: format!("mask plane holds {other}, expected 0 or 1"),
                })
            }
        }
    }
    UncertaintyMap::new(data, valid, h, w)
}
