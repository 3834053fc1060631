//! Random instance generators and scalar-loop reference implementations
//! shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use seg_uncertainty::tensor_io::{LabelMap, PredictionStack, ProbabilityMap, Scenario};

/// Random distribution over `k` classes in one of several flavours:
/// smooth, peaked, one-hot, exact ties or containing zeros.
pub fn random_distribution(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let mut raw: Vec<f64> = match rng.random_range(0..5) {
        0 => (0..k).map(|_| rng.random_range(0.0..1.0)).collect(),
        1 => {
            let top = rng.random_range(0..k);
            (0..k)
                .map(|c| {
                    if c == top {
                        20.0
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect()
        }
        2 => {
            let top = rng.random_range(0..k);
            (0..k).map(|c| if c == top { 1.0 } else { 0.0 }).collect()
        }
        3 => (0..k).map(|_| rng.random_range(1..4) as f64).collect(),
        _ => (0..k)
            .map(|_| {
                if rng.random_bool(0.4) {
                    0.0
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect(),
    };
    let s: f64 = raw.iter().sum();
    if s == 0.0 {
        raw[0] = 1.0;
        return raw;
    }
    raw.iter_mut().for_each(|v| *v /= s);
    raw
}

pub fn random_map(rng: &mut impl Rng, k: usize, h: usize, w: usize) -> ProbabilityMap {
    let n = h * w;
    let mut data = vec![0f32; k * n];
    for p in 0..n {
        for (c, v) in random_distribution(rng, k).into_iter().enumerate() {
            data[c * n + p] = v as f32;
        }
    }
    ProbabilityMap::from_raw(data, k, h, w).expect("generated map is valid")
}

pub fn random_stack(
    rng: &mut impl Rng,
    n_pred: usize,
    k: usize,
    h: usize,
    w: usize,
) -> PredictionStack {
    let maps = (0..n_pred).map(|_| random_map(rng, k, h, w)).collect();
    let scenario = if n_pred == 1 {
        Scenario::Base
    } else {
        Scenario::Drop
    };
    PredictionStack::new(maps, scenario).expect("generated stack is valid")
}

pub fn random_labels(
    rng: &mut impl Rng,
    k: usize,
    h: usize,
    w: usize,
    ignore_rate: f64,
) -> LabelMap {
    let labels = (0..h * w)
        .map(|_| {
            if rng.random_bool(ignore_rate) {
                255
            } else {
                rng.random_range(0..k as u16)
            }
        })
        .collect();
    LabelMap::new(labels, h, w, 255, k).expect("generated labels are valid")
}

pub fn pixel(map: &ProbabilityMap, p: usize) -> Vec<f64> {
    map.pixel(p).into_iter().map(f64::from).collect()
}

pub mod oracle {
    //! Textbook formulas, one pixel at a time, in `f64`.

    pub fn vr(p: &[f64]) -> f64 {
        1.0 - p.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn pm(p: &[f64]) -> f64 {
        let mut sorted = p.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        1.0 - (sorted[0] - sorted[1])
    }

    /// Entropy of `p / sum(p)`.
    pub fn entropy(p: &[f64]) -> f64 {
        let s: f64 = p.iter().sum();
        p.iter()
            .map(|&v| v / s)
            .filter(|&v| v > 0.0)
            .map(|v| -v * v.ln())
            .sum()
    }

    pub fn mean(members: &[Vec<f64>]) -> Vec<f64> {
        let k = members[0].len();
        (0..k)
            .map(|c| members.iter().map(|m| m[c]).sum::<f64>() / members.len() as f64)
            .collect()
    }

    /// Population variance per class, then mean and max over classes.
    pub fn class_variance(members: &[Vec<f64>]) -> (f64, f64) {
        let mu = mean(members);
        let n = members.len() as f64;
        let var: Vec<f64> = (0..mu.len())
            .map(|c| members.iter().map(|m| (m[c] - mu[c]).powi(2)).sum::<f64>() / n)
            .collect();
        (
            var.iter().sum::<f64>() / var.len() as f64,
            var.iter().cloned().fold(0.0, f64::max),
        )
    }

    /// Entropy of the mean minus mean entropy.
    pub fn bald(members: &[Vec<f64>]) -> f64 {
        let h_mean = entropy(&mean(members));
        let mean_h = members.iter().map(|m| entropy(m)).sum::<f64>() / members.len() as f64;
        h_mean - mean_h
    }

    /// `P(u_mis > u_cor) + P(tie) / 2` over every pair.
    pub fn pairwise_auroc(scores: &[(f32, bool)]) -> Option<f64> {
        let (mut wins, mut ties, mut pos, mut neg) = (0u64, 0u64, 0u64, 0u64);
        for &(_, m) in scores {
            if m {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if pos == 0 || neg == 0 {
            return None;
        }
        for &(a, _) in scores.iter().filter(|(_, m)| *m) {
            for &(b, _) in scores.iter().filter(|(_, m)| !*m) {
                if a > b {
                    wins += 1;
                } else if a == b {
                    ties += 1;
                }
            }
        }
        Some((2 * wins + ties) as f64 / (2 * pos * neg) as f64)
    }
}
