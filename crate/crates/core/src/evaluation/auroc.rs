//! Exact AUROC with misclassified pixels as the positive class.
//!
//! Scores are reduced to a sorted run of distinct values, each carrying its
//! positive and negative counts. Runs merge exactly, so pooling across images
//! gives the same answer in any order.

use super::DetectionTarget;
use crate::error::{Error, Result};
use crate::tensor_io::{LabelMap, UncertaintyMap};

/// Sorted distinct scores with per-score positive / negative counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankPool {
    runs: Vec<ScoreRun>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ScoreRun {
    score: f32,
    positives: u64,
    negatives: u64,
}

/// Order-preserving map from finite `f32` to `u32`; `-0.0` folds onto `0.0`.
#[inline]
fn sort_key(score: f32) -> u32 {
    let bits = (score + 0.0).to_bits();
    if bits & 0x8000_0000 != 0 {
        !bits
    } else {
        bits | 0x8000_0000
    }
}

#[inline]
fn from_sort_key(key: u32) -> f32 {
    if key & 0x8000_0000 != 0 {
        f32::from_bits(key & 0x7fff_ffff)
    } else {
        f32::from_bits(!key)
    }
}

impl RankPool {
    /// Builds a pool from `(score, is_positive)` pairs.
    pub fn from_scores(scores: impl IntoIterator<Item = (f32, bool)>) -> Self {
        let mut keys: Vec<u64> = scores
            .into_iter()
            .map(|(s, pos)| (u64::from(sort_key(s)) << 1) | u64::from(pos))
            .collect();
        keys.sort_unstable();
        let mut runs: Vec<ScoreRun> = Vec::new();
        for key in keys {
            let score = from_sort_key((key >> 1) as u32);
            let positive = key & 1 == 1;
            match runs.last_mut() {
                Some(run) if run.score == score => {
                    if positive {
                        run.positives += 1;
                    } else {
                        run.negatives += 1;
                    }
                }
                _ => runs.push(ScoreRun {
                    score,
                    positives: u64::from(positive),
                    negatives: u64::from(!positive),
                }),
            }
        }
        Self { runs }
    }

    /// Valid pixels of `map`, labelled by `target`.
    pub fn from_map(map: &UncertaintyMap, target: &DetectionTarget) -> Result<Self> {
        check_shapes(map, target)?;
        Ok(Self::from_scores(
            map.values()
                .iter()
                .zip(target.misclassified())
                .zip(target.valid())
                .filter(|(_, &v)| v)
                .map(|((&u, &m), _)| (u, m)),
        ))
    }

    pub fn positives(&self) -> u64 {
        self.runs.iter().map(|r| r.positives).sum()
    }

    pub fn negatives(&self) -> u64 {
        self.runs.iter().map(|r| r.negatives).sum()
    }

    pub fn merge(&mut self, other: &RankPool) {
        let mut merged = Vec::with_capacity(self.runs.len() + other.runs.len());
        let (mut a, mut b) = (self.runs.iter().peekable(), other.runs.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if sort_key(x.score) < sort_key(y.score) {
                        *a.next().unwrap()
                    } else if sort_key(y.score) < sort_key(x.score) {
                        *b.next().unwrap()
                    } else {
                        let (x, y) = (a.next().unwrap(), b.next().unwrap());
                        ScoreRun {
                            score: x.score,
                            positives: x.positives + y.positives,
                            negatives: x.negatives + y.negatives,
                        }
                    }
                }
                (Some(_), None) => *a.next().unwrap(),
                (None, Some(_)) => *b.next().unwrap(),
                (None, None) => break,
            };
            merged.push(next);
        }
        self.runs = merged;
    }

    /// `(#{u_pos > u_neg} + 0.5 #{u_pos = u_neg}) / (n_pos n_neg)`.
    pub fn auroc(&self) -> Result<f64> {
        let (pos, neg) = (self.positives(), self.negatives());
        if pos == 0 || neg == 0 {
            return Err(Error::UndefinedAuroc {
                positives: pos,
                negatives: neg,
            });
        }
        // Twice the Mann-Whitney statistic, kept integral.
        let mut twice_u: u128 = 0;
        let mut negatives_below: u128 = 0;
        for run in &self.runs {
            let (p, n) = (u128::from(run.positives), u128::from(run.negatives));
            twice_u += p * (2 * negatives_below + n);
            negatives_below += n;
        }
        Ok(twice_u as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64)
    }

    /// ROC points `(fpr, tpr)` from the strictest threshold down, starting at
    /// `(0, 0)` and ending at `(1, 1)`.
    pub fn roc_curve(&self) -> Result<Vec<(f64, f64)>> {
        let (pos, neg) = (self.positives(), self.negatives());
        if pos == 0 || neg == 0 {
            return Err(Error::UndefinedAuroc {
                positives: pos,
                negatives: neg,
            });
        }
        let mut points = vec![(0.0, 0.0)];
        let (mut tp, mut fp) = (0u64, 0u64);
        for run in self.runs.iter().rev() {
            tp += run.positives;
            fp += run.negatives;
            points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        }
        Ok(points)
    }
}

fn check_shapes(map: &UncertaintyMap, target: &DetectionTarget) -> Result<()> {
    if map.shape() != target.shape() {
        return Err(Error::Shape {
            expected: target.shape(),
            actual: map.shape(),
        });
    }
    Ok(())
}

pub fn auroc(map: &UncertaintyMap, target: &DetectionTarget) -> Result<f64> {
    RankPool::from_map(map, target)?.auroc()
}

/// Area under the piecewise-linear ROC curve, computed by sweeping the
/// thresholds from high to low. Independent of [`RankPool`].
pub fn trapezoidal_auroc(map: &UncertaintyMap, target: &DetectionTarget) -> Result<f64> {
    check_shapes(map, target)?;
    let mut scored: Vec<(f32, bool)> = map
        .values()
        .iter()
        .zip(target.misclassified())
        .zip(target.valid())
        .filter(|(_, &v)| v)
        .map(|((&u, &m), _)| (u, m))
        .collect();
    let pos = scored.iter().filter(|s| s.1).count() as u64;
    let neg = scored.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuroc {
            positives: pos,
            negatives: neg,
        });
    }
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));
    let (mut area, mut tp, mut fp) = (0f64, 0u64, 0u64);
    let (mut prev_tpr, mut prev_fpr) = (0f64, 0f64);
    let mut i = 0;
    while i < scored.len() {
        let mut j = i;
        while j < scored.len() && scored[j].0 == scored[i].0 {
            if scored[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let (tpr, fpr) = (tp as f64 / pos as f64, fp as f64 / neg as f64);
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        (prev_tpr, prev_fpr) = (tpr, fpr);
        i = j;
    }
    Ok(area)
}

/// One pool per ground-truth class over the valid pixels of that class.
pub fn class_pools(
    map: &UncertaintyMap,
    target: &DetectionTarget,
    gt: &LabelMap,
) -> Result<Vec<RankPool>> {
    check_shapes(map, target)?;
    if gt.shape() != target.shape() {
        return Err(Error::Shape {
            expected: target.shape(),
            actual: gt.shape(),
        });
    }
    let mut per_class: Vec<Vec<(f32, bool)>> = vec![Vec::new(); gt.num_classes()];
    for (((&u, &m), &v), &label) in map
        .values()
        .iter()
        .zip(target.misclassified())
        .zip(target.valid())
        .zip(gt.labels())
    {
        if v && label != gt.ignore_index() {
            per_class[usize::from(label)].push((u, m));
        }
    }
    Ok(per_class.into_iter().map(RankPool::from_scores).collect())
}

/// AUROC restricted to each ground-truth class; absent where a class lacks
/// either outcome.
pub fn classwise_auroc(
    map: &UncertaintyMap,
    target: &DetectionTarget,
    gt: &LabelMap,
) -> Result<Vec<Option<f64>>> {
    Ok(class_pools(map, target, gt)?
        .iter()
        .map(|pool| pool.auroc().ok())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn instance(u: Vec<f32>, mis: Vec<bool>) -> (UncertaintyMap, DetectionTarget) {
        let n = u.len();
        (
            UncertaintyMap::new(u, vec![true; n], 1, n).unwrap(),
            DetectionTarget::new(mis, vec![true; n], 1, n).unwrap(),
        )
    }

    fn pairwise(u: &[f32], mis: &[bool]) -> f64 {
        let (mut wins, mut pairs) = (0f64, 0f64);
        for i in 0..u.len() {
            for j in 0..u.len() {
                if mis[i] && !mis[j] {
                    pairs += 1.0;
                    if u[i] > u[j] {
                        wins += 1.0;
                    } else if u[i] == u[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn separated_and_constant() {
        let (m, t) = instance(vec![0.9, 0.8, 0.1, 0.2], vec![true, true, false, false]);
        assert_eq!(auroc(&m, &t).unwrap(), 1.0);
        let (m, t) = instance(vec![0.3; 4], vec![true, false, true, false]);
        assert_eq!(auroc(&m, &t).unwrap(), 0.5);
        let (m, t) = instance(vec![0.3; 4], vec![false; 4]);
        assert!(matches!(
            auroc(&m, &t),
            Err(Error::UndefinedAuroc {
                positives: 0,
                negatives: 4
            })
        ));
    }

    #[test]
    fn sort_key_orders_like_floats() {
        let values = [-3.5f32, -0.0, 0.0, 1e-30, 0.25, 7.0, f32::MAX, f32::MIN];
        for &a in &values {
            assert_eq!(from_sort_key(sort_key(a)), a + 0.0);
            for &b in &values {
                assert_eq!(
                    sort_key(a).cmp(&sort_key(b)),
                    a.partial_cmp(&b).unwrap(),
                    "{a} {b}"
                );
            }
        }
    }

    #[test]
    fn matches_pairwise_and_trapezoid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for round in 0..300 {
            let n = rng.random_range(2..300);
            let quantized = round % 2 == 0;
            let u: Vec<f32> = (0..n)
                .map(|_| {
                    if quantized {
                        rng.random_range(0..8) as f32 / 7.0
                    } else {
                        rng.random()
                    }
                })
                .collect();
            let mut mis: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
            mis[0] = true;
            mis[1] = false;
            let (m, t) = instance(u.clone(), mis.clone());
            let expected = pairwise(&u, &mis);
            assert!((auroc(&m, &t).unwrap() - expected).abs() <= 1e-12);
            assert!((trapezoidal_auroc(&m, &t).unwrap() - expected).abs() <= 1e-12);
        }
    }

    #[test]
    fn merged_pools_equal_pooled_pixels() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let scores: Vec<(f32, bool)> = (0..500)
            .map(|_| (rng.random_range(0..20) as f32 / 19.0, rng.random_bool(0.4)))
            .collect();
        let whole = RankPool::from_scores(scores.iter().copied());
        let mut left = RankPool::from_scores(scores[..200].iter().copied());
        let right = RankPool::from_scores(scores[200..].iter().copied());
        let mut right_first = right.clone();
        right_first.merge(&left);
        left.merge(&right);
        assert_eq!(left, whole);
        assert_eq!(right_first, whole);
    }

    #[test]
    fn roc_curve_ends_at_corners() {
        let pool = RankPool::from_scores([(0.1, false), (0.5, true), (0.5, false), (0.9, true)]);
        let curve = pool.roc_curve().unwrap();
        assert_eq!(curve.first(), Some(&(0.0, 0.0)));
        assert_eq!(curve.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn classwise_fixtures() {
        // single class present with both outcomes
        let (m, t) = instance(vec![0.9, 0.1, 0.2], vec![true, false, false]);
        let gt = LabelMap::new(vec![1, 1, 1], 1, 3, 255, 3).unwrap();
        assert_eq!(
            classwise_auroc(&m, &t, &gt).unwrap(),
            vec![None, Some(1.0), None]
        );

        // two classes, each perfectly separated
        let (m, t) = instance(vec![0.9, 0.1, 0.3, 0.2], vec![true, false, true, false]);
        let gt = LabelMap::new(vec![0, 0, 1, 1], 1, 4, 255, 2).unwrap();
        assert_eq!(
            classwise_auroc(&m, &t, &gt).unwrap(),
            vec![Some(1.0), Some(1.0)]
        );
    }

    #[test]
    fn classwise_matches_per_class_pairwise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..40 {
            let n = 256;
            let labels: Vec<u16> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let u: Vec<f32> = (0..n)
                .map(|_| rng.random_range(0..16) as f32 / 15.0)
                .collect();
            let mis: Vec<bool> = (0..n).map(|_| rng.random_bool(0.25)).collect();
            let (m, t) = instance(u.clone(), mis.clone());
            let gt = LabelMap::new(labels.clone(), 1, n, 255, 5).unwrap();
            let got = classwise_auroc(&m, &t, &gt).unwrap();
            for c in 0..5u16 {
                let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
                let cu: Vec<f32> = idx.iter().map(|&i| u[i]).collect();
                let cm: Vec<bool> = idx.iter().map(|&i| mis[i]).collect();
                let defined = cm.iter().any(|&x| x) && cm.iter().any(|&x| !x);
                match got[c as usize] {
                    Some(v) => {
                        assert!(defined);
                        assert!((v - pairwise(&cu, &cm)).abs() <= 1e-12);
                    }
                    None => assert!(!defined),
                }
            }
        }
    }
}
