//! Uncertainty from one class distribution per pixel: variation ratio,
//! probability margin and entropy, plus their ensemble-averaged variants.

use rayon::prelude::*;

use super::chunks::{for_each_chunk, mean_into, neg_plogp, Planes, CHUNK};
use crate::tensor_io::{PredictionStack, ProbabilityMap, UncertaintyMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SingleMetric {
    VariationRatio,
    ProbabilityMargin,
    Entropy,
}

fn top_two(planes: Planes<'_>, num_classes: usize, max1: &mut [f32], max2: &mut [f32]) {
    max1.fill(f32::NEG_INFINITY);
    max2.fill(f32::NEG_INFINITY);
    for k in 0..num_classes {
        for ((&p, m1), m2) in planes
            .plane(k)
            .iter()
            .zip(max1.iter_mut())
            .zip(max2.iter_mut())
        {
            if p > *m1 {
                *m2 = *m1;
                *m1 = p;
            } else if p > *m2 {
                *m2 = p;
            }
        }
    }
}

#[inline]
fn vr_value(max1: f32) -> f32 {
    (1.0 - f64::from(max1)) as f32
}

/// Entropy of the pixel's distribution rescaled to unit sum, from
/// `sum -p ln p` and `sum p`.
#[inline]
fn entropy_value(neg_plogp_sum: f64, sum: f64) -> f32 {
    if sum > 0.0 {
        (sum.ln() + neg_plogp_sum / sum) as f32
    } else {
        0.0
    }
}

#[inline]
fn pm_value(max1: f32, max2: f32) -> f32 {
    (1.0 - (f64::from(max1) - f64::from(max2))) as f32
}

impl SingleMetric {
    fn apply(self, planes: Planes<'_>, num_classes: usize, out: &mut [f32]) {
        let len = out.len();
        match self {
            SingleMetric::VariationRatio | SingleMetric::ProbabilityMargin => {
                let mut max1 = vec![0f32; len];
                let mut max2 = vec![0f32; len];
                top_two(planes, num_classes, &mut max1, &mut max2);
                if self == SingleMetric::VariationRatio {
                    for (o, &m1) in out.iter_mut().zip(&max1) {
                        *o = vr_value(m1);
                    }
                } else {
                    for ((o, &m1), &m2) in out.iter_mut().zip(&max1).zip(&max2) {
                        *o = pm_value(m1, m2);
                    }
                }
            }
            SingleMetric::Entropy => {
                let mut acc = vec![0f64; len];
                let mut sum = vec![0f64; len];
                for k in 0..num_classes {
                    for ((a, s), &p) in acc.iter_mut().zip(sum.iter_mut()).zip(planes.plane(k)) {
                        *a += neg_plogp(p);
                        *s += f64::from(p);
                    }
                }
                for ((o, &a), &s) in out.iter_mut().zip(&acc).zip(&sum) {
                    *o = entropy_value(a, s);
                }
            }
        }
    }

    pub(crate) fn on_map(self, map: &ProbabilityMap) -> UncertaintyMap {
        let mut out = vec![0f32; map.num_pixels()];
        for_each_chunk(&mut out, |start, chunk| {
            self.apply(
                Planes::of_map(map, start, chunk.len()),
                map.num_classes(),
                chunk,
            )
        });
        UncertaintyMap::dense(out, map.height(), map.width())
    }

    /// Same arithmetic as `self.on_map(&average_probabilities(stack))`,
    /// without materializing the averaged tensor.
    pub(crate) fn on_mean(self, stack: &PredictionStack) -> UncertaintyMap {
        let k = stack.num_classes();
        let mut out = vec![0f32; stack.num_pixels()];
        for_each_chunk(&mut out, |start, chunk| {
            let len = chunk.len();
            let mut buf = vec![0f32; k * len];
            mean_into(stack, start, len, &mut buf);
            self.apply(Planes::packed(&buf, len), k, chunk)
        });
        UncertaintyMap::dense(out, stack.height(), stack.width())
    }
}

/// `1 - max_k p_k` per pixel.
pub fn variation_ratio(map: &ProbabilityMap) -> UncertaintyMap {
    SingleMetric::VariationRatio.on_map(map)
}

/// `1 - (p_max - p_second)` per pixel.
pub fn probability_margin(map: &ProbabilityMap) -> UncertaintyMap {
    SingleMetric::ProbabilityMargin.on_map(map)
}

/// Natural-log Shannon entropy per pixel, with `0 ln 0 = 0`. Stored
/// probabilities are rescaled to sum to one in `f64` first, so float32
/// rounding of the inputs does not leak into the result.
pub fn entropy(map: &ProbabilityMap) -> UncertaintyMap {
    SingleMetric::Entropy.on_map(map)
}

pub fn averaged_vr(stack: &PredictionStack) -> UncertaintyMap {
    SingleMetric::VariationRatio.on_mean(stack)
}

pub fn averaged_margin(stack: &PredictionStack) -> UncertaintyMap {
    SingleMetric::ProbabilityMargin.on_mean(stack)
}

pub fn averaged_entropy(stack: &PredictionStack) -> UncertaintyMap {
    SingleMetric::Entropy.on_mean(stack)
}

/// The three single-pass maps, computed in one sweep over the tensor.
#[derive(Debug, Clone)]
pub struct BaseMetrics {
    pub variation_ratio: UncertaintyMap,
    pub probability_margin: UncertaintyMap,
    pub entropy: UncertaintyMap,
}

/// Variation ratio, probability margin and entropy in a single pass.
/// Bit-identical to calling the three functions separately.
pub fn base_metrics(map: &ProbabilityMap) -> BaseMetrics {
    let n = map.num_pixels();
    let k = map.num_classes();
    let mut vr = vec![0f32; n];
    let mut pm = vec![0f32; n];
    let mut ent = vec![0f32; n];
    vr.par_chunks_mut(CHUNK)
        .zip(pm.par_chunks_mut(CHUNK))
        .zip(ent.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(i, ((vr, pm), ent))| {
            let len = vr.len();
            let planes = Planes::of_map(map, i * CHUNK, len);
            let mut max1 = vec![f32::NEG_INFINITY; len];
            let mut max2 = vec![f32::NEG_INFINITY; len];
            let mut acc = vec![0f64; len];
            let mut sum = vec![0f64; len];
            for c in 0..k {
                for (j, &p) in planes.plane(c).iter().enumerate() {
                    if p > max1[j] {
                        max2[j] = max1[j];
                        max1[j] = p;
                    } else if p > max2[j] {
                        max2[j] = p;
                    }
                    acc[j] += neg_plogp(p);
                    sum[j] += f64::from(p);
                }
            }
            for j in 0..len {
                vr[j] = vr_value(max1[j]);
                pm[j] = pm_value(max1[j], max2[j]);
                ent[j] = entropy_value(acc[j], sum[j]);
            }
        });
    let (h, w) = (map.height(), map.width());
    BaseMetrics {
        variation_ratio: UncertaintyMap::dense(vr, h, w),
        probability_margin: UncertaintyMap::dense(pm, h, w),
        entropy: UncertaintyMap::dense(ent, h, w),
    }
}
