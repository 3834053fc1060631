use crate::error::{Error, Result};
use crate::tensor_io::{LabelMap, ProbabilityMap};
use crate::uncertainty::chunks::{Planes, CHUNK};

use rayon::prelude::*;

/// Per-pixel predicted class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedLabels {
    labels: Vec<u16>,
    height: usize,
    width: usize,
}

impl PredictedLabels {
    pub fn new(labels: Vec<u16>, height: usize, width: usize) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Shape {
                expected: (height, width),
                actual: (labels.len() / width.max(1), width),
            });
        }
        Ok(Self {
            labels,
            height,
            width,
        })
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Argmax class and its probability for every pixel; ties go to the
/// smallest class index.
pub fn argmax_with_confidence(map: &ProbabilityMap) -> (PredictedLabels, Vec<f32>) {
    let n = map.num_pixels();
    let mut labels = vec![0u16; n];
    let mut confidence = vec![0f32; n];
    labels
        .par_chunks_mut(CHUNK)
        .zip(confidence.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(i, (labels, best))| {
            let planes = Planes::of_map(map, i * CHUNK, labels.len());
            best.fill(f32::NEG_INFINITY);
            for k in 0..map.num_classes() {
                for ((&p, b), l) in planes
                    .plane(k)
                    .iter()
                    .zip(best.iter_mut())
                    .zip(labels.iter_mut())
                {
                    if p > *b {
                        *b = p;
                        *l = k as u16;
                    }
                }
            }
        });
    (
        PredictedLabels {
            labels,
            height: map.height(),
            width: map.width(),
        },
        confidence,
    )
}

pub fn argmax_labels(map: &ProbabilityMap) -> PredictedLabels {
    argmax_with_confidence(map).0
}

/// Which valid pixels the model got wrong.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionTarget {
    misclassified: Vec<bool>,
    valid: Vec<bool>,
    height: usize,
    width: usize,
}

impl DetectionTarget {
    pub fn new(
        misclassified: Vec<bool>,
        valid: Vec<bool>,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if misclassified.len() != height * width || valid.len() != height * width {
            return Err(Error::Invariant(format!(
                "detection target buffers do not match {height}x{width}"
            )));
        }
        if misclassified.iter().zip(&valid).any(|(&m, &v)| m && !v) {
            return Err(Error::Invariant(
                "misclassified pixel outside the valid mask".into(),
            ));
        }
        Ok(Self {
            misclassified,
            valid,
            height,
            width,
        })
    }

    pub fn misclassified(&self) -> &[bool] {
        &self.misclassified
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn num_valid(&self) -> u64 {
        self.valid.iter().filter(|&&v| v).count() as u64
    }

    pub fn num_misclassified(&self) -> u64 {
        self.misclassified.iter().filter(|&&m| m).count() as u64
    }

    pub fn num_correct(&self) -> u64 {
        self.num_valid() - self.num_misclassified()
    }
}

pub fn misclassification_target(pred: &PredictedLabels, gt: &LabelMap) -> Result<DetectionTarget> {
    if pred.shape() != gt.shape() {
        return Err(Error::Shape {
            expected: gt.shape(),
            actual: pred.shape(),
        });
    }
    let valid = gt.valid_mask();
    let misclassified = pred
        .labels
        .iter()
        .zip(gt.labels())
        .zip(&valid)
        .map(|((&p, &g), &ok)| ok && p != g)
        .collect();
    Ok(DetectionTarget {
        misclassified,
        valid,
        height: pred.height,
        width: pred.width,
    })
}
