use std::ops::{Add, AddAssign};

use serde::Serialize;

use super::DetectionTarget;
use crate::error::{Error, Result};
use crate::thresholding::DetectionMask;

/// Confusion counts of flagged pixels against misclassified pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PRStats {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub n_valid: u64,
}

impl PRStats {
    /// `tp / (tp + fp)`, absent when nothing was flagged.
    pub fn precision(&self) -> Option<f64> {
        let flagged = self.true_positives + self.false_positives;
        (flagged > 0).then(|| self.true_positives as f64 / flagged as f64)
    }

    /// `tp / (tp + fn)`, absent when nothing was misclassified.
    pub fn recall(&self) -> Option<f64> {
        let positives = self.true_positives + self.false_negatives;
        (positives > 0).then(|| self.true_positives as f64 / positives as f64)
    }

    /// Share of valid pixels that were flagged.
    pub fn pixel_fraction(&self) -> Option<f64> {
        (self.n_valid > 0)
            .then(|| (self.true_positives + self.false_positives) as f64 / self.n_valid as f64)
    }
}

impl Add for PRStats {
    type Output = PRStats;

    fn add(self, rhs: PRStats) -> PRStats {
        PRStats {
            true_positives: self.true_positives + rhs.true_positives,
            false_positives: self.false_positives + rhs.false_positives,
            false_negatives: self.false_negatives + rhs.false_negatives,
            n_valid: self.n_valid + rhs.n_valid,
        }
    }
}

impl AddAssign for PRStats {
    fn add_assign(&mut self, rhs: PRStats) {
        *self = *self + rhs;
    }
}

pub fn precision_recall(mask: &DetectionMask, target: &DetectionTarget) -> Result<PRStats> {
    if mask.shape() != target.shape() {
        return Err(Error::Shape {
            expected: target.shape(),
            actual: mask.shape(),
        });
    }
    if mask.valid() != target.valid() {
        return Err(Error::Invariant(
            "detection mask and target disagree on valid pixels".into(),
        ));
    }
    let mut stats = PRStats::default();
    for ((&flagged, &mis), &valid) in mask
        .flagged()
        .iter()
        .zip(target.misclassified())
        .zip(target.valid())
    {
        if !valid {
            continue;
        }
        stats.n_valid += 1;
        match (flagged, mis) {
            (true, true) => stats.true_positives += 1,
            (true, false) => stats.false_positives += 1,
            (false, true) => stats.false_negatives += 1,
            (false, false) => {}
        }
    }
    Ok(stats)
}
