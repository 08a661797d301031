//! Unnormalized multidimensional FFTs over row-major cubic arrays.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::C64;

type PlanKey = (usize, bool);

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let lock = PLANS.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = lock.lock().expect("fft plan cache poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((n, inverse))
        .or_insert_with(|| {
            let dir = if inverse { FftDirection::Inverse } else { FftDirection::Forward };
            planner.plan_fft(n, dir)
        })
        .clone()
}

/// In-place DFT along every axis of an `n^d` row-major array.
/// Forward uses `exp(-2πi jk/n)`, inverse `exp(+2πi jk/n)`; neither is scaled.
pub fn fft_nd(data: &mut [C64], n: usize, d: usize, inverse: bool) {
    assert_eq!(data.len(), n.pow(d as u32), "array length is not n^d");
    let fft = plan(n, inverse);
    let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    // Last axis is contiguous.
    fft.process_with_scratch(data, &mut scratch);
    let mut block = Vec::new();
    for axis in (0..d - 1).rev() {
        let inner = n.pow((d - 1 - axis) as u32);
        let outer = data.len() / (inner * n);
        block.resize(inner * n, C64::new(0.0, 0.0));
        for o in 0..outer {
            let base = o * inner * n;
            for j in 0..n {
                for s in 0..inner {
                    block[s * n + j] = data[base + j * inner + s];
                }
            }
            fft.process_with_scratch(&mut block, &mut scratch);
            for j in 0..n {
                for s in 0..inner {
                    data[base + j * inner + s] = block[s * n + j];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(data: &[C64], n: usize, d: usize) -> Vec<C64> {
        let total = n.pow(d as u32);
        let idx = |mut p: usize| {
            let mut v = vec![0usize; d];
            for a in (0..d).rev() {
                v[a] = p % n;
                p /= n;
            }
            v
        };
        (0..total)
            .map(|q| {
                let kq = idx(q);
                (0..total)
                    .map(|p| {
                        let jp = idx(p);
                        let phase: f64 = jp.iter().zip(&kq).map(|(a, b)| (a * b) as f64).sum();
                        data[p] * C64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft_in_2d_and_3d() {
        for d in [2usize, 3] {
            let n: usize = 4;
            let total = n.pow(d as u32);
            let data: Vec<C64> = (0..total)
                .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            let mut fast = data.clone();
            fft_nd(&mut fast, n, d, false);
            let slow = naive(&data, n, d);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_undoes_forward_up_to_scale() {
        let (n, d) = (8, 3);
        let data: Vec<C64> = (0..512).map(|i| C64::new(i as f64, -(i as f64).sqrt())).collect();
        let mut x = data.clone();
        fft_nd(&mut x, n, d, false);
        fft_nd(&mut x, n, d, true);
        for (a, b) in x.iter().zip(&data) {
            assert!((a / 512.0 - b).norm() < 1e-10);
        }
    }
}
