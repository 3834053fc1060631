use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::npy;
use crate::error::{Error, Result};

/// Largest tolerated deviation of a pixel's class sum from 1 before the
/// map is rejected.
pub const SUM_TOLERANCE: f64 = 1e-3;

/// Pixels whose class sum is already this close to 1 are left untouched by
/// renormalization, which makes renormalization idempotent.
pub const NORMALIZED_TOLERANCE: f64 = 1e-6;

/// Dense per-pixel class distributions, stored channel-first as `(K, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    data: Vec<f32>,
    num_classes: usize,
    height: usize,
    width: usize,
}

impl ProbabilityMap {
    /// Validates a `(K, H, W)` buffer and renormalizes every pixel to sum to one.
    pub fn from_raw(
        data: Vec<f32>,
        num_classes: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        Self::from_raw_named(data, num_classes, height, width, "<memory>")
    }

    pub(crate) fn from_raw_named(
        mut data: Vec<f32>,
        num_classes: usize,
        height: usize,
        width: usize,
        source: &str,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Format {
                path: source.to_string(),
                reason: format!("need at least 2 classes, got {num_classes}"),
            });
        }
        if height == 0 || width == 0 {
            return Err(Error::Format {
                path: source.to_string(),
                reason: format!("empty spatial shape {height}x{width}"),
            });
        }
        if data.len() != num_classes * height * width {
            return Err(Error::Format {
                path: source.to_string(),
                reason: format!(
                    "buffer of {} values does not match shape ({num_classes}, {height}, {width})",
                    data.len()
                ),
            });
        }
        normalize_pixels(&mut data, num_classes, height * width).map_err(|bad| {
            Error::Distribution {
                file: source.to_string(),
                row: bad.pixel / width,
                col: bad.pixel % width,
                detail: bad.detail,
            }
        })?;
        Ok(Self {
            data,
            num_classes,
            height,
            width,
        })
    }

    /// Wraps a buffer that is already known to satisfy the map invariants.
    pub(crate) fn from_normalized(
        data: Vec<f32>,
        num_classes: usize,
        height: usize,
        width: usize,
    ) -> Self {
        debug_assert_eq!(data.len(), num_classes * height * width);
        Self {
            data,
            num_classes,
            height,
            width,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_classes, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// All pixels of one class, row-major.
    pub fn plane(&self, class: usize) -> &[f32] {
        let n = self.num_pixels();
        &self.data[class * n..(class + 1) * n]
    }

    pub fn get(&self, class: usize, row: usize, col: usize) -> f32 {
        self.data[class * self.num_pixels() + row * self.width + col]
    }

    /// Class distribution of a single pixel (flat index).
    pub fn pixel(&self, index: usize) -> Vec<f32> {
        let n = self.num_pixels();
        (0..self.num_classes)
            .map(|k| self.data[k * n + index])
            .collect()
    }

    pub fn into_raw(self) -> Vec<f32> {
        self.data
    }
}

pub(crate) struct BadPixel {
    pub pixel: usize,
    pub detail: String,
}

/// Checks every pixel against the value and sum gates, rescales those that
/// are off by more than [`NORMALIZED_TOLERANCE`], and clamps to `[0, 1]`.
pub(crate) fn normalize_pixels(
    data: &mut [f32],
    num_classes: usize,
    num_pixels: usize,
) -> Result<(), BadPixel> {
    const CHUNK: usize = 4096;
    let mut sums = vec![0f64; CHUNK.min(num_pixels)];
    let mut start = 0;
    while start < num_pixels {
        let end = (start + CHUNK).min(num_pixels);
        let sums = &mut sums[..end - start];
        sums.iter_mut().for_each(|s| *s = 0.0);
        for k in 0..num_classes {
            let plane = &data[k * num_pixels + start..k * num_pixels + end];
            for (i, (&p, s)) in plane.iter().zip(sums.iter_mut()).enumerate() {
                if !p.is_finite() || p < 0.0 || f64::from(p) > 1.0 + SUM_TOLERANCE {
                    return Err(BadPixel {
                        pixel: start + i,
                        detail: format!("class {k} probability {p} outside [0, 1]"),
                    });
                }
                *s += f64::from(p);
            }
        }
        for (i, &s) in sums.iter().enumerate() {
            if (s - 1.0).abs() > SUM_TOLERANCE {
                return Err(BadPixel {
                    pixel: start + i,
                    detail: format!(
                        "class sum {s} outside [1 - {SUM_TOLERANCE}, 1 + {SUM_TOLERANCE}]"
                    ),
                });
            }
        }
        for k in 0..num_classes {
            let plane = &mut data[k * num_pixels + start..k * num_pixels + end];
            for (p, &s) in plane.iter_mut().zip(sums.iter()) {
                if (s - 1.0).abs() > NORMALIZED_TOLERANCE {
                    *p = (f64::from(*p) / s) as f32;
                }
                *p = p.clamp(0.0, 1.0);
            }
        }
        start = end;
    }
    Ok(())
}

/// Renormalizes a raw `(K, pixels)` buffer in place; see [`ProbabilityMap::from_raw`].
pub fn renormalize(data: &mut [f32], num_classes: usize, num_pixels: usize) -> Result<()> {
    normalize_pixels(data, num_classes, num_pixels).map_err(|bad| Error::Distribution {
        file: "<memory>".into(),
        row: 0,
        col: bad.pixel,
        detail: bad.detail,
    })
}

/// How the predictions of a stack were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// A single forward pass.
    Base,
    /// Repeated passes with Gaussian input noise.
    Noise,
    /// Multi-scale inputs resampled back to the original resolution.
    Scale,
    /// Passes with dropout active at inference.
    Drop,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Base => "base",
            Scenario::Noise => "noise",
            Scenario::Scale => "scale",
            Scenario::Drop => "drop",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Scenario::Base),
            "noise" => Ok(Scenario::Noise),
            "scale" => Ok(Scenario::Scale),
            "drop" => Ok(Scenario::Drop),
            other => Err(Error::usage(
                "--scenario",
                format!("unknown scenario `{other}`; expected one of base, noise, scale, drop"),
            )),
        }
    }
}

/// The `N` predictions produced for one image under one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionStack {
    predictions: Vec<ProbabilityMap>,
    scenario: Scenario,
}

impl PredictionStack {
    pub fn new(predictions: Vec<ProbabilityMap>, scenario: Scenario) -> Result<Self> {
        let first = predictions
            .first()
            .ok_or_else(|| Error::Invariant("prediction stack is empty".into()))?;
        let shape = first.shape();
        if let Some(bad) = predictions.iter().position(|p| p.shape() != shape) {
            return Err(Error::Invariant(format!(
                "prediction {bad} has shape {:?}, expected {:?}",
                predictions[bad].shape(),
                shape
            )));
        }
        if scenario == Scenario::Base && predictions.len() != 1 {
            return Err(Error::Invariant(format!(
                "base scenario holds exactly one prediction, got {}",
                predictions.len()
            )));
        }
        Ok(Self {
            predictions,
            scenario,
        })
    }

    pub fn single(map: ProbabilityMap) -> Self {
        Self {
            predictions: vec![map],
            scenario: Scenario::Base,
        }
    }

    pub fn predictions(&self) -> &[ProbabilityMap] {
        &self.predictions
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn num_classes(&self) -> usize {
        self.predictions[0].num_classes()
    }

    pub fn height(&self) -> usize {
        self.predictions[0].height()
    }

    pub fn width(&self) -> usize {
        self.predictions[0].width()
    }

    pub fn num_pixels(&self) -> usize {
        self.predictions[0].num_pixels()
    }
}

/// Loads one `(K, H, W)` probability file.
pub fn load_probability_map(path: &Path) -> Result<ProbabilityMap> {
    let (shape, data) = npy::read_f32_array(path)?;
    let display = path.display().to_string();
    let &[k, h, w] = shape.as_slice() else {
        return Err(Error::Format {
            path: display,
            reason: format!("expected a 3-d (K, H, W) array, found shape {shape:?}"),
        });
    };
    ProbabilityMap::from_raw_named(data, k, h, w, &display)
}

pub fn save_probability_map(map: &ProbabilityMap, path: &Path) -> Result<()> {
    let (k, h, w) = map.shape();
    npy::write_f32_array(path, &[k, h, w], map.data())
}
