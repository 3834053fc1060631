//! Per-image dynamic thresholds and binary flagging of likely misclassified
//! pixels.
//!
//! A pixel is flagged when its uncertainty is strictly greater than the
//! threshold. Both selectors expect maps already scaled to `[0, 1]` by
//! [`normalize_unit`](crate::uncertainty::normalize_unit).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor_io::UncertaintyMap;

pub const DEFAULT_LEVELS: u32 = 100;

/// How a threshold is chosen for each image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Scan `levels + 1` uniformly spaced thresholds on `[0, 1]` and pick the
    /// one where the flagged fraction drops the most.
    LargestDifference { levels: u32 },
    /// Flag as many pixels as possible without exceeding `budget` of the
    /// valid pixels.
    MaxFraction { budget: f64 },
}

impl ThresholdPolicy {
    pub fn largest_difference(levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::usage(
                "--threshold",
                format!("largest-diff needs L >= 2, got {levels}"),
            ));
        }
        Ok(ThresholdPolicy::LargestDifference { levels })
    }

    pub fn max_fraction(budget: f64) -> Result<Self> {
        if !(budget > 0.0 && budget < 1.0) {
            return Err(Error::usage(
                "--threshold",
                format!("max-frac budget must lie in (0, 1), got {budget}"),
            ));
        }
        Ok(ThresholdPolicy::MaxFraction { budget })
    }

    pub fn select(&self, map: &UncertaintyMap) -> Result<f64> {
        match *self {
            ThresholdPolicy::LargestDifference { levels } => {
                largest_difference_threshold(map, levels)
            }
            ThresholdPolicy::MaxFraction { budget } => max_fraction_threshold(map, budget),
        }
    }
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::LargestDifference {
            levels: DEFAULT_LEVELS,
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::LargestDifference { levels } => write!(f, "largest-diff:L={levels}"),
            ThresholdPolicy::MaxFraction { budget } => write!(f, "max-frac:{budget}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    /// Accepts `largest-diff`, `largest-diff:L=<n>` and `max-frac:<budget>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::usage(
                "--threshold",
                format!("cannot parse `{s}`; expected largest-diff[:L=<levels>] or max-frac:<budget in (0,1)>"),
            )
        };
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        match (name, arg) {
            ("largest-diff", None) => Ok(ThresholdPolicy::default()),
            ("largest-diff", Some(arg)) => {
                let levels = arg.strip_prefix("L=").unwrap_or(arg);
                Self::largest_difference(levels.parse().map_err(|_| bad())?)
            }
            ("max-frac", Some(arg)) => Self::max_fraction(arg.parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

/// Flagged pixels of one image and the threshold that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMask {
    flagged: Vec<bool>,
    valid: Vec<bool>,
    threshold_used: f64,
    height: usize,
    width: usize,
}

impl DetectionMask {
    pub fn flagged(&self) -> &[bool] {
        &self.flagged
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn threshold_used(&self) -> f64 {
        self.threshold_used
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_flagged(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Flags valid pixels whose uncertainty is strictly above `threshold`.
pub fn flag(map: &UncertaintyMap, threshold: f64) -> DetectionMask {
    let flagged = map
        .values()
        .iter()
        .zip(map.valid())
        .map(|(&u, &ok)| ok && f64::from(u) > threshold)
        .collect();
    DetectionMask {
        flagged,
        valid: map.valid().to_vec(),
        threshold_used: threshold,
        height: map.height(),
        width: map.width(),
    }
}

fn sorted_valid(map: &UncertaintyMap) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = map.valid_values().map(f64::from).collect();
    if values.is_empty() {
        return Err(Error::EmptyImage);
    }
    values.sort_unstable_by(f64::total_cmp);
    Ok(values)
}

/// Grid point `i / levels` of the threshold scan.
pub fn grid_level(i: u32, levels: u32) -> f64 {
    f64::from(i) / f64::from(levels)
}

/// Threshold `t_i = i / L` maximizing the drop `f(t_{i-1}) - f(t_i)` of the
/// flagged fraction; ties go to the smallest `i`.
pub fn largest_difference_threshold(map: &UncertaintyMap, levels: u32) -> Result<f64> {
    if levels < 2 {
        return Err(Error::Config(format!(
            "largest-diff needs at least 2 levels, got {levels}"
        )));
    }
    let values = sorted_valid(map)?;
    let above = |t: f64| values.len() - values.partition_point(|&v| v <= t);
    let mut previous = above(grid_level(0, levels));
    let mut best = (0usize, 1u32);
    for i in 1..=levels {
        let current = above(grid_level(i, levels));
        let drop = previous - current;
        if drop > best.0 {
            best = (drop, i);
        }
        previous = current;
    }
    Ok(grid_level(best.1, levels))
}

/// Smallest threshold whose flagged fraction stays within `budget`: the
/// `ceil((1 - budget) n)`-th smallest valid value.
pub fn max_fraction_threshold(map: &UncertaintyMap, budget: f64) -> Result<f64> {
    if !(budget > 0.0 && budget < 1.0) {
        return Err(Error::Config(format!(
            "budget must lie in (0, 1), got {budget}"
        )));
    }
    let values = sorted_valid(map)?;
    let n = values.len();
    // ceil((1 - b) n) == n - floor(b n), and floor(b n) <= b n holds in floats.
    let allowed = (budget * n as f64).floor() as usize;
    Ok(values[n - allowed.min(n - 1) - 1])
}
