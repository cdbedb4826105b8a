//! Multi-dimensional FFT over a row-major cube of side `n`.
//!
//! Lines along each axis are transformed independently, so the result does not
//! depend on how rayon schedules them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

type PlanCache = Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>;

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static PLANS: OnceLock<PlanCache> = OnceLock::new();
    let cache = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((n, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

/// Unnormalized in-place transform: forward uses `exp(-2πi mn/N)`, inverse `exp(+2πi mn/N)`.
pub(crate) fn fft_nd(data: &mut [Complex64], dim: usize, n: usize, inverse: bool) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let fft = plan(n, inverse);
    let scratch_len = fft.get_inplace_scratch_len();
    let zero = Complex64::new(0.0, 0.0);
    for axis in 0..dim {
        let stride = n.pow((dim - 1 - axis) as u32);
        if stride == 1 {
            data.par_chunks_mut(n).for_each_init(
                || vec![zero; scratch_len],
                |scratch, line| fft.process_with_scratch(line, scratch),
            );
            continue;
        }
        let mut lines = vec![zero; data.len()];
        {
            let src: &[Complex64] = data;
            lines.par_chunks_mut(n).enumerate().for_each_init(
                || vec![zero; scratch_len],
                |scratch, (id, line)| {
                    let outer = id / stride;
                    let inner = id % stride;
                    let base = outer * stride * n + inner;
                    for (m, v) in line.iter_mut().enumerate() {
                        *v = src[base + m * stride];
                    }
                    fft.process_with_scratch(line, scratch);
                },
            );
        }
        let lines = &lines;
        data.par_chunks_mut(stride).enumerate().for_each(|(c, chunk)| {
            let outer = c / n;
            let m = c % n;
            for (inner, v) in chunk.iter_mut().enumerate() {
                *v = lines[(outer * stride + inner) * n + m];
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft_2d(input: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for k0 in 0..n {
            for k1 in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for x0 in 0..n {
                    for x1 in 0..n {
                        let ang = -2.0 * std::f64::consts::PI * ((k0 * x0 + k1 * x1) as f64) / n as f64;
                        acc += input[x0 * n + x1] * Complex64::from_polar(1.0, ang);
                    }
                }
                out[k0 * n + k1] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let n = 8;
        let input: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = input.clone();
        fft_nd(&mut data, 2, n, false);
        let expect = naive_dft_2d(&input, n);
        for (a, b) in data.iter().zip(&expect) {
            assert!((a - b).norm() < 1e-11);
        }
    }
}
