//! Metrics over a stack of predictions: the mean distribution, per-class
//! variance and BALD.

use rayon::prelude::*;

use super::chunks::{for_each_chunk, mean_into, Planes, CHUNK};
use crate::error::{Error, Result};
use crate::tensor_io::{PredictionStack, ProbabilityMap, UncertaintyMap};

/// Negative BALD values down to this magnitude are float noise and clamp to 0.
pub const BALD_TOLERANCE: f64 = 1e-9;

/// How per-class variances collapse to one value per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarianceReduction {
    MeanOverClasses,
    MaxOverClasses,
}

/// Element-wise mean of the stack's predictions.
pub fn average_probabilities(stack: &PredictionStack) -> ProbabilityMap {
    if stack.len() == 1 {
        return stack.predictions()[0].clone();
    }
    let k = stack.num_classes();
    let n = stack.num_pixels();
    let mut data = vec![0f32; k * n];
    // Chunk-major scratch, then scatter into plane-major storage.
    let chunks: Vec<(usize, Vec<f32>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|i| {
            let start = i * CHUNK;
            let len = CHUNK.min(n - start);
            let mut buf = vec![0f32; k * len];
            mean_into(stack, start, len, &mut buf);
            (start, buf)
        })
        .collect();
    for (start, buf) in chunks {
        let len = buf.len() / k;
        for c in 0..k {
            data[c * n + start..c * n + start + len].copy_from_slice(&buf[c * len..(c + 1) * len]);
        }
    }
    ProbabilityMap::from_normalized(data, k, stack.height(), stack.width())
}

/// Population variance of each class across the stack, reduced over classes.
pub fn class_variance(
    stack: &PredictionStack,
    reduction: VarianceReduction,
) -> Result<UncertaintyMap> {
    if stack.len() < 2 {
        return Err(Error::EnsembleSize {
            required: 2,
            actual: stack.len(),
        });
    }
    let k = stack.num_classes();
    let n = stack.len() as f64;
    let mut out = vec![0f32; stack.num_pixels()];
    for_each_chunk(&mut out, |start, chunk| {
        let len = chunk.len();
        let mut mean = vec![0f64; len];
        let mut var = vec![0f64; len];
        let mut reduced = vec![0f64; len];
        for c in 0..k {
            mean.fill(0.0);
            var.fill(0.0);
            for map in stack.predictions() {
                for (m, &p) in mean
                    .iter_mut()
                    .zip(Planes::of_map(map, start, len).plane(c))
                {
                    *m += f64::from(p);
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            for map in stack.predictions() {
                let plane = Planes::of_map(map, start, len).plane(c);
                for ((v, &m), &p) in var.iter_mut().zip(&mean).zip(plane) {
                    let d = f64::from(p) - m;
                    *v += d * d;
                }
            }
            match reduction {
                VarianceReduction::MeanOverClasses => {
                    for (r, &v) in reduced.iter_mut().zip(&var) {
                        *r += v / n;
                    }
                }
                VarianceReduction::MaxOverClasses => {
                    for (r, &v) in reduced.iter_mut().zip(&var) {
                        *r = r.max(v / n);
                    }
                }
            }
        }
        let scale = match reduction {
            VarianceReduction::MeanOverClasses => k as f64,
            VarianceReduction::MaxOverClasses => 1.0,
        };
        for (o, &r) in chunk.iter_mut().zip(&reduced) {
            *o = (r / scale) as f32;
        }
    });
    Ok(UncertaintyMap::dense(out, stack.height(), stack.width()))
}

/// Entropy of the mean prediction minus the mean entropy of the members.
///
/// Evaluated as the mean KL divergence of each member from the mean
/// prediction, which is the same quantity without the cancellation between
/// two large entropies.
///
/// Values in `[-BALD_TOLERANCE, 0)` clamp to zero; anything more negative is
/// reported as an [`Error::Invariant`].
pub fn bald(stack: &PredictionStack) -> Result<UncertaintyMap> {
    let mut out = vec![0f32; stack.num_pixels()];
    bald_into(stack, &mut out, |v| v as f32)?;
    Ok(UncertaintyMap::dense(out, stack.height(), stack.width()))
}

/// The [`bald`] scores in `f64`, before rounding to the stored `f32`.
pub fn bald_scores(stack: &PredictionStack) -> Result<Vec<f64>> {
    let mut out = vec![0f64; stack.num_pixels()];
    bald_into(stack, &mut out, |v| v)?;
    Ok(out)
}

fn bald_into<T: Send>(stack: &PredictionStack, out: &mut [T], store: fn(f64) -> T) -> Result<()> {
    let k = stack.num_classes();
    let n = stack.len() as f64;
    let width = stack.width();
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .try_for_each(|(i, chunk)| {
            let start = i * CHUNK;
            let len = chunk.len();
            let mut mean = vec![0f64; len];
            let mut divergence = vec![0f64; len];
            for c in 0..k {
                mean.fill(0.0);
                for map in stack.predictions() {
                    let plane = Planes::of_map(map, start, len).plane(c);
                    for (m, &p) in mean.iter_mut().zip(plane) {
                        *m += f64::from(p);
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                for map in stack.predictions() {
                    let plane = Planes::of_map(map, start, len).plane(c);
                    for ((d, &m), &p) in divergence.iter_mut().zip(&mean).zip(plane) {
                        if p > 0.0 {
                            let p = f64::from(p);
                            *d += p * (p / m).ln();
                        }
                    }
                }
            }
            for (j, o) in chunk.iter_mut().enumerate() {
                let score = divergence[j] / n;
                if score < -BALD_TOLERANCE {
                    let pixel = start + j;
                    return Err(Error::Invariant(format!(
                        "BALD score {score} below -{BALD_TOLERANCE} at pixel (row {}, col {})",
                        pixel / width,
                        pixel % width
                    )));
                }
                *o = store(score.max(0.0));
            }
            Ok(())
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::Scenario;
    use approx::assert_abs_diff_eq;

    fn disagreeing_pair() -> PredictionStack {
        let a = ProbabilityMap::from_raw(vec![1.0, 0.0], 2, 1, 1).unwrap();
        let b = ProbabilityMap::from_raw(vec![0.0, 1.0], 2, 1, 1).unwrap();
        PredictionStack::new(vec![a, b], Scenario::Drop).unwrap()
    }

    #[test]
    fn mean_of_disagreeing_one_hots() {
        let mean = average_probabilities(&disagreeing_pair());
        assert_eq!(mean.data(), &[0.5, 0.5]);
    }

    #[test]
    fn identical_predictions_have_no_spread() {
        let m = ProbabilityMap::from_raw(vec![0.2, 0.5, 0.8, 0.5], 2, 1, 2).unwrap();
        let stack =
            PredictionStack::new(vec![m.clone(), m.clone(), m.clone()], Scenario::Noise).unwrap();
        assert_eq!(average_probabilities(&stack), m);
        for r in [
            VarianceReduction::MeanOverClasses,
            VarianceReduction::MaxOverClasses,
        ] {
            assert!(class_variance(&stack, r)
                .unwrap()
                .values()
                .iter()
                .all(|&v| v == 0.0));
        }
        assert!(bald(&stack).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disagreeing_pair_fixtures() {
        let stack = disagreeing_pair();
        for r in [
            VarianceReduction::MeanOverClasses,
            VarianceReduction::MaxOverClasses,
        ] {
            assert_eq!(class_variance(&stack, r).unwrap().values(), &[0.25]);
        }
        assert_abs_diff_eq!(
            f64::from(bald(&stack).unwrap().values()[0]),
            std::f64::consts::LN_2,
            epsilon = 1e-7
        );
    }

    #[test]
    fn variance_needs_two_predictions() {
        let single =
            PredictionStack::single(ProbabilityMap::from_raw(vec![0.5, 0.5], 2, 1, 1).unwrap());
        assert!(matches!(
            class_variance(&single, VarianceReduction::MaxOverClasses),
            Err(Error::EnsembleSize {
                required: 2,
                actual: 1
            })
        ));
        // BALD of a single prediction is defined and zero.
        assert_eq!(bald(&single).unwrap().values(), &[0.0]);
    }
}
