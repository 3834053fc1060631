//! Per-pixel uncertainty maps.
//!
//! All entropies use the natural logarithm. Sums run in `f64` and results
//! are stored as `f32`. Every function is pure and may be called
//! concurrently on shared inputs.

pub(crate) mod chunks;
mod edges;
mod ensemble;
mod metric;
mod single;

pub use edges::{scharr_gradient, scharr_magnitude, GrayImage, LUMA_WEIGHTS, SCHARR_X};
pub use ensemble::{
    average_probabilities, bald, bald_scores, class_variance, VarianceReduction, BALD_TOLERANCE,
};
pub use metric::Metric;
pub use single::{
    averaged_entropy, averaged_margin, averaged_vr, base_metrics, entropy, probability_margin,
    variation_ratio, BaseMetrics,
};

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::tensor_io::UncertaintyMap;

/// Post-processing applied to a raw uncertainty map before thresholding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Normalization {
    /// Min-max scaling of valid pixels, see [`normalize_unit`].
    #[default]
    Unit,
    None,
}

impl Normalization {
    pub fn apply(self, map: UncertaintyMap) -> UncertaintyMap {
        match self {
            Normalization::Unit => normalize_unit(&map),
            Normalization::None => map,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Unit => "unit",
            Normalization::None => "none",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "unit" => Ok(Normalization::Unit),
            "none" => Ok(Normalization::None),
            _ => Err(Error::usage(
                "--normalize",
                format!("unknown value `{s}`; allowed: unit, none"),
            )),
        }
    }
}

/// Min-max scales valid pixels to `[0, 1]` and zeroes invalid ones. A map
/// whose valid values are all equal maps to zero.
pub fn normalize_unit(map: &UncertaintyMap) -> UncertaintyMap {
    let range = map.valid_range();
    let values = map
        .values()
        .iter()
        .zip(map.valid())
        .map(|(&v, &ok)| match (ok, range) {
            (true, Some((lo, hi))) if hi > lo => {
                ((f64::from(v) - f64::from(lo)) / (f64::from(hi) - f64::from(lo))) as f32
            }
            _ => 0.0,
        })
        .collect();
    UncertaintyMap::from_parts_unchecked(values, map.valid().to_vec(), map.height(), map.width())
}
