//! Segmentation quality: confusion matrix / mIoU, expected calibration error
//! and Brier score. Each has a mergeable accumulator for dataset pooling.

use serde::Serialize;

use super::PredictedLabels;
use crate::error::{Error, Result};
use crate::tensor_io::{LabelMap, ProbabilityMap};
use crate::uncertainty::chunks::{Planes, CHUNK};

pub const DEFAULT_ECE_BINS: usize = 15;

/// Smallest `i` in `0..=bins` with `value <= i / bins`, or `bins + 1` when
/// `value` exceeds 1. Grid points are the same `f64` divisions the
/// thresholding scan uses.
pub fn grid_index(value: f64, bins: usize) -> usize {
    let level = |i: usize| i as f64 / bins as f64;
    let mut i = (value * bins as f64).ceil().clamp(0.0, bins as f64 + 1.0) as usize;
    while i > 0 && value <= level(i - 1) {
        i -= 1;
    }
    while i <= bins && value > level(i) {
        i += 1;
    }
    i
}

/// Rows are ground truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

/// Per-class IoU (absent for classes with an empty union) and their mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiouResult {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds every non-ignored pixel.
    pub fn accumulate(&mut self, pred: &PredictedLabels, gt: &LabelMap) -> Result<()> {
        if pred.shape() != gt.shape() {
            return Err(Error::Shape {
                expected: gt.shape(),
                actual: pred.shape(),
            });
        }
        let k = self.num_classes;
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g == gt.ignore_index() {
                continue;
            }
            let (g, p) = (usize::from(g), usize::from(p));
            if g >= k || p >= k {
                return Err(Error::Invariant(format!(
                    "class pair ({g}, {p}) outside a {k}-class matrix"
                )));
            }
            self.counts[g * k + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(
            self.num_classes, other.num_classes,
            "confusion matrices of different size"
        );
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn iou_per_class(&self) -> Vec<Option<f64>> {
        let k = self.num_classes;
        (0..k)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..k).map(|p| self.get(c, p)).sum();
                let col: u64 = (0..k).map(|t| self.get(t, c)).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect()
    }

    /// Mean IoU over classes with a non-empty union.
    pub fn miou(&self) -> Result<MiouResult> {
        let per_class = self.iou_per_class();
        let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
        if defined.is_empty() {
            return Err(Error::UndefinedMetric(
                "mIoU: no class has a non-empty union",
            ));
        }
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(MiouResult { per_class, mean })
    }
}

pub fn accumulate_confusion(pred: &PredictedLabels, gt: &LabelMap) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new(gt.num_classes());
    cm.accumulate(pred, gt)?;
    Ok(cm)
}

pub fn miou(cm: &ConfusionMatrix) -> Result<MiouResult> {
    cm.miou()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct EceBin {
    count: u64,
    correct: u64,
    confidence_sum: f64,
}

/// Confidence histogram over `B` equal-width bins on `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EceAccumulator {
    bins: Vec<EceBin>,
}

impl EceAccumulator {
    pub fn new(bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("ECE needs at least one bin".into()));
        }
        Ok(Self {
            bins: vec![EceBin::default(); bins],
        })
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }

    /// Bin `b` (zero-based) covers `(b / B, (b + 1) / B]`; zero confidence
    /// lands in the first bin.
    pub fn bin_of(&self, confidence: f64) -> usize {
        grid_index(confidence, self.bins.len()).clamp(1, self.bins.len()) - 1
    }

    pub fn add(&mut self, confidence: f64, correct: bool) {
        let b = self.bin_of(confidence);
        let bin = &mut self.bins[b];
        bin.count += 1;
        bin.correct += u64::from(correct);
        bin.confidence_sum += confidence;
    }

    pub fn merge(&mut self, other: &EceAccumulator) {
        assert_eq!(
            self.bins.len(),
            other.bins.len(),
            "ECE accumulators of different size"
        );
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            a.count += b.count;
            a.correct += b.correct;
            a.confidence_sum += b.confidence_sum;
        }
    }

    pub fn count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `sum_b (n_b / n) |acc_b - conf_b|`.
    pub fn value(&self) -> Result<f64> {
        let n = self.count();
        if n == 0 {
            return Err(Error::UndefinedMetric("ECE: no valid pixels"));
        }
        let gap: f64 = self
            .bins
            .iter()
            .map(|b| (b.correct as f64 - b.confidence_sum).abs())
            .sum();
        Ok(gap / n as f64)
    }

    /// Adds every non-ignored pixel given per-pixel confidences and predictions.
    pub fn add_image(
        &mut self,
        confidence: &[f32],
        pred: &PredictedLabels,
        gt: &LabelMap,
    ) -> Result<()> {
        if pred.shape() != gt.shape() || confidence.len() != gt.labels().len() {
            return Err(Error::Shape {
                expected: gt.shape(),
                actual: pred.shape(),
            });
        }
        for ((&c, &p), &g) in confidence.iter().zip(pred.labels()).zip(gt.labels()) {
            if g != gt.ignore_index() {
                self.add(f64::from(c), p == g);
            }
        }
        Ok(())
    }
}

pub fn ece(map: &ProbabilityMap, gt: &LabelMap, bins: usize) -> Result<f64> {
    let (pred, confidence) = super::argmax_with_confidence(map);
    let mut acc = EceAccumulator::new(bins)?;
    acc.add_image(&confidence, &pred, gt)?;
    acc.value()
}

/// Running sum of per-pixel Brier scores.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BrierAccumulator {
    pub sum: f64,
    pub count: u64,
}

impl BrierAccumulator {
    pub fn add_image(&mut self, map: &ProbabilityMap, gt: &LabelMap) -> Result<()> {
        if (map.height(), map.width()) != gt.shape() {
            return Err(Error::Shape {
                expected: gt.shape(),
                actual: (map.height(), map.width()),
            });
        }
        let k = map.num_classes();
        let n = map.num_pixels();
        let labels = gt.labels();
        let ignore = gt.ignore_index();
        let mut start = 0;
        let mut squares = vec![0f64; CHUNK.min(n)];
        while start < n {
            let len = CHUNK.min(n - start);
            let squares = &mut squares[..len];
            squares.fill(0.0);
            let planes = Planes::of_map(map, start, len);
            for c in 0..k {
                for (s, &p) in squares.iter_mut().zip(planes.plane(c)) {
                    let p = f64::from(p);
                    *s += p * p;
                }
            }
            for (j, &s) in squares.iter().enumerate() {
                let g = labels[start + j];
                if g == ignore {
                    continue;
                }
                let p_true = f64::from(planes.plane(usize::from(g))[j]);
                self.sum += s - 2.0 * p_true + 1.0;
                self.count += 1;
            }
            start += len;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &BrierAccumulator) {
        self.sum += other.sum;
        self.count += other.count;
    }

    pub fn value(&self) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::UndefinedMetric("Brier score: no valid pixels"));
        }
        Ok(self.sum / self.count as f64)
    }
}

/// Mean over valid pixels of `sum_k (p_k - 1[gt = k])^2`.
pub fn brier(map: &ProbabilityMap, gt: &LabelMap) -> Result<f64> {
    let mut acc = BrierAccumulator::default();
    acc.add_image(map, gt)?;
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::argmax_labels;
    use rand::{Rng, SeedableRng};

    #[test]
    fn grid_index_respects_boundaries() {
        assert_eq!(grid_index(0.0, 10), 0);
        assert_eq!(grid_index(-0.5, 10), 0);
        assert_eq!(grid_index(1.0, 10), 10);
        assert_eq!(grid_index(1.5, 10), 11);
        assert_eq!(grid_index(0.3, 10), 3);
        assert_eq!(grid_index(f64::from(0.3f32), 10), 4);
        for b in 1..40usize {
            for i in 0..=b {
                let t = i as f64 / b as f64;
                assert_eq!(grid_index(t, b), i);
            }
        }
    }

    #[test]
    fn miou_fixtures() {
        let gt = LabelMap::new(vec![0, 1, 0, 1], 2, 2, 255, 2).unwrap();
        let pred = PredictedLabels::new(vec![0, 1, 0, 1], 2, 2).unwrap();
        let r = accumulate_confusion(&pred, &gt).unwrap().miou().unwrap();
        assert_eq!(
            (r.per_class.clone(), r.mean),
            (vec![Some(1.0), Some(1.0)], 1.0)
        );

        let all_zero = PredictedLabels::new(vec![0; 4], 2, 2).unwrap();
        let r = accumulate_confusion(&all_zero, &gt)
            .unwrap()
            .miou()
            .unwrap();
        assert_eq!(r.per_class, vec![Some(0.5), Some(0.0)]);
        assert_eq!(r.mean, 0.25);

        let ignored = LabelMap::new(vec![255; 4], 2, 2, 255, 2).unwrap();
        let cm = accumulate_confusion(&all_zero, &ignored).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(cm.miou(), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ece_fixtures() {
        let gt = LabelMap::new(vec![1, 0], 1, 2, 255, 2).unwrap();
        let map = ProbabilityMap::from_raw(vec![0.0, 1.0, 1.0, 0.0], 2, 1, 2).unwrap();
        assert_eq!(ece(&map, &gt, 15).unwrap(), 0.0);

        // ten pixels at confidence 0.75, eight correct: one bin, |0.8 - 0.75|
        let n = 10;
        let mut data = vec![0.75f32; n];
        data.extend(vec![0.25f32; n]);
        let map = ProbabilityMap::from_raw(data, 2, 1, n).unwrap();
        let labels: Vec<u16> = (0..n).map(|i| if i < 8 { 0 } else { 1 }).collect();
        let gt = LabelMap::new(labels.clone(), 1, n, 255, 2).unwrap();
        assert!((ece(&map, &gt, 10).unwrap() - 0.05).abs() < 1e-12);

        // confidence 0.8 with 80% accuracy is calibrated up to f32 rounding of 0.8
        let mut data = vec![0.8f32; n];
        data.extend(vec![0.2f32; n]);
        let map = ProbabilityMap::from_raw(data, 2, 1, n).unwrap();
        assert!(ece(&map, &gt, 15).unwrap() < 1e-7);
    }

    #[test]
    fn ece_two_bin_hand_computation() {
        // bins of width 0.5: confidences 0.6 (correct), 0.9 (wrong), 0.8 (correct)
        let mut acc = EceAccumulator::new(2).unwrap();
        acc.add(0.5, true); // lands in the first bin, (0, 0.5]
        acc.add(0.6, true);
        acc.add(0.9, false);
        acc.add(0.8, true);
        // bin 0: n=1, acc=1, conf=0.5 -> |1 - 0.5| = 0.5
        // bin 1: n=3, correct=2, conf sum 2.3 -> |2 - 2.3| = 0.3
        let expected = (0.5 + 0.3) / 4.0;
        assert!((acc.value().unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn brier_fixtures() {
        let gt = LabelMap::new(vec![2, 0, 255], 1, 3, 255, 4).unwrap();
        let mut one_hot = vec![0f32; 12];
        one_hot[2 * 3] = 1.0;
        one_hot[1] = 1.0;
        one_hot[2] = 1.0;
        let map = ProbabilityMap::from_raw(one_hot, 4, 1, 3).unwrap();
        // pixel 1 predicts class 0 correctly, pixel 0 class 2 correctly
        assert_eq!(brier(&map, &gt).unwrap(), 0.0);

        let uniform = ProbabilityMap::from_raw(vec![0.25; 12], 4, 1, 3).unwrap();
        assert!((brier(&uniform, &gt).unwrap() - 0.75).abs() < 1e-7);
    }

    #[test]
    fn brier_matches_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let (k, h, w) = (5, 20, 30);
        let n = h * w;
        let mut data = vec![0f32; k * n];
        for p in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = raw.iter().sum();
            for c in 0..k {
                data[c * n + p] = (raw[c] / s) as f32;
            }
        }
        let map = ProbabilityMap::from_raw(data, k, h, w).unwrap();
        let labels: Vec<u16> = (0..n)
            .map(|_| rng.random_range(0..k as u16 + 1))
            .map(|l| if l == k as u16 { 255 } else { l })
            .collect();
        let gt = LabelMap::new(labels.clone(), h, w, 255, k).unwrap();
        let (mut sum, mut count) = (0f64, 0);
        for p in 0..n {
            if labels[p] == 255 {
                continue;
            }
            for c in 0..k {
                let y = if usize::from(labels[p]) == c {
                    1.0
                } else {
                    0.0
                };
                sum += (f64::from(map.pixel(p)[c]) - y).powi(2);
            }
            count += 1;
        }
        assert!((brier(&map, &gt).unwrap() - sum / count as f64).abs() < 1e-7);
        let pred = argmax_labels(&map);
        assert!(accumulate_confusion(&pred, &gt).unwrap().total() == count as u64);
    }
}
