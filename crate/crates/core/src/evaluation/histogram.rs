use serde::Serialize;

use super::quality::grid_index;
use super::DetectionTarget;
use crate::error::{Error, Result};
use crate::tensor_io::UncertaintyMap;

/// Cumulative fractions of correct pixels at or below, and misclassified
/// pixels above, each threshold `i / B`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CumulativeHistograms {
    pub thresholds: Vec<f64>,
    /// Absent when the data has no correct pixels.
    pub correct: Option<Vec<f64>>,
    /// Absent when the data has no misclassified pixels.
    pub misclassified: Option<Vec<f64>>,
}

/// Integer counts behind [`CumulativeHistograms`]; merges exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramAccumulator {
    bins: usize,
    // index i counts pixels whose smallest grid point at or above u is i / B;
    // the last slot holds values above 1
    correct: Vec<u64>,
    misclassified: Vec<u64>,
}

impl HistogramAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("histograms need at least one bin".into()));
        }
        Ok(Self {
            bins,
            correct: vec![0; bins + 2],
            misclassified: vec![0; bins + 2],
        })
    }

    pub fn add(&mut self, value: f32, misclassified: bool) {
        let i = grid_index(f64::from(value), self.bins);
        if misclassified {
            self.misclassified[i] += 1;
        } else {
            self.correct[i] += 1;
        }
    }

    pub fn add_image(&mut self, map: &UncertaintyMap, target: &DetectionTarget) -> Result<()> {
        if map.shape() != target.shape() {
            return Err(Error::Shape {
                expected: target.shape(),
                actual: map.shape(),
            });
        }
        for ((&u, &m), &v) in map
            .values()
            .iter()
            .zip(target.misclassified())
            .zip(target.valid())
        {
            if v {
                self.add(u, m);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &HistogramAccumulator) {
        assert_eq!(
            self.bins, other.bins,
            "histograms with different bin counts"
        );
        for (a, b) in self.correct.iter_mut().zip(&other.correct) {
            *a += b;
        }
        for (a, b) in self.misclassified.iter_mut().zip(&other.misclassified) {
            *a += b;
        }
    }

    pub fn finish(&self) -> CumulativeHistograms {
        let b = self.bins;
        let thresholds = (0..=b).map(|i| i as f64 / b as f64).collect();
        let n_correct: u64 = self.correct.iter().sum();
        let n_mis: u64 = self.misclassified.iter().sum();
        let correct = (n_correct > 0).then(|| {
            let mut running = 0;
            (0..=b)
                .map(|i| {
                    running += self.correct[i];
                    running as f64 / n_correct as f64
                })
                .collect()
        });
        let misclassified = (n_mis > 0).then(|| {
            let mut above = n_mis;
            (0..=b)
                .map(|i| {
                    above -= self.misclassified[i];
                    above as f64 / n_mis as f64
                })
                .collect()
        });
        CumulativeHistograms {
            thresholds,
            correct,
            misclassified,
        }
    }
}

pub fn cumulative_histograms(
    map: &UncertaintyMap,
    target: &DetectionTarget,
    bins: usize,
) -> Result<CumulativeHistograms> {
    let mut acc = HistogramAccumulator::new(bins)?;
    acc.add_image(map, target)?;
    Ok(acc.finish())
}
