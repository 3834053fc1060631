//! Pixel-range driver shared by the metric kernels.
//!
//! Kernels walk class planes for a contiguous run of pixels so every inner
//! loop is a unit-stride scan over one `(H*W)` plane.

use rayon::prelude::*;

use crate::tensor_io::{PredictionStack, ProbabilityMap};

pub(crate) const CHUNK: usize = 4096;

/// The class planes of a contiguous pixel range.
#[derive(Clone, Copy)]
pub(crate) struct Planes<'a> {
    data: &'a [f32],
    stride: usize,
    offset: usize,
    len: usize,
}

impl<'a> Planes<'a> {
    pub fn of_map(map: &'a ProbabilityMap, start: usize, len: usize) -> Self {
        Self {
            data: map.data(),
            stride: map.num_pixels(),
            offset: start,
            len,
        }
    }

    /// Planes of a packed `(K, len)` scratch buffer.
    pub fn packed(buf: &'a [f32], len: usize) -> Self {
        Self {
            data: buf,
            stride: len,
            offset: 0,
            len,
        }
    }

    #[inline]
    pub fn plane(&self, class: usize) -> &'a [f32] {
        let begin = class * self.stride + self.offset;
        &self.data[begin..begin + self.len]
    }
}

/// Runs `kernel(start_pixel, out_chunk)` over `out` in parallel chunks.
pub(crate) fn for_each_chunk<F>(out: &mut [f32], kernel: F)
where
    F: Fn(usize, &mut [f32]) + Sync + Send,
{
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(i, chunk)| kernel(i * CHUNK, chunk));
}

/// Writes the `f32` ensemble mean of `stack` for pixels `start..start+len`
/// into `buf` (packed `(K, len)`). Sums run in prediction order in `f64`.
pub(crate) fn mean_into(stack: &PredictionStack, start: usize, len: usize, buf: &mut [f32]) {
    let n = stack.len() as f64;
    let mut acc = vec![0f64; len];
    for k in 0..stack.num_classes() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for map in stack.predictions() {
            let plane = Planes::of_map(map, start, len).plane(k);
            for (a, &p) in acc.iter_mut().zip(plane) {
                *a += f64::from(p);
            }
        }
        for (out, &a) in buf[k * len..(k + 1) * len].iter_mut().zip(&acc) {
            *out = (a / n) as f32;
        }
    }
}

/// `-p ln p` with `0 ln 0 = 0`, accumulated in `f64`.
#[inline]
pub(crate) fn neg_plogp(p: f32) -> f64 {
    if p > 0.0 {
        let p = f64::from(p.min(1.0));
        -p * p.ln()
    } else {
        0.0
    }
}
