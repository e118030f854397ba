//! Lag convolution of kernel weights against increment sequences.
//!
//! Every Riemann-Stieltjes sum in this crate reduces to
//! `out[m] = sum_l w[l] * x[off + m - l]`, a slice of the full linear
//! convolution `w * x`. A direct double loop is the reference evaluation;
//! the FFT path must agree with it to within 1e-10 absolute and is selected
//! automatically for large workloads.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// Evaluate `(w * x)[off + m]` for `m = 0..n_out` with a double loop.
pub fn lag_convolve_direct(x: &[f64], w: &[f64], off: i64, n_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_out];
    for (m, o) in out.iter_mut().enumerate() {
        let j = off + m as i64;
        let l_min = (j + 1 - x.len() as i64).max(0) as usize;
        let l_max_excl = ((j + 1).max(0) as usize).min(w.len());
        let mut acc = 0.0;
        for l in l_min..l_max_excl {
            acc += w[l] * x[(j - l as i64) as usize];
        }
        *o = acc;
    }
    out
}

/// Same values via FFT linear convolution.
pub fn lag_convolve_fft(x: &[f64], w: &[f64], off: i64, n_out: usize) -> Vec<f64> {
    let full = x.len() + w.len() - 1;
    let size = full.next_power_of_two();
    let fwd = plan(size, false);
    let inv = plan(size, true);

    let mut fx: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); size];
    for (i, &v) in x.iter().enumerate() {
        fx[i] = Complex::new(v, 0.0);
    }
    let mut fw: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); size];
    for (i, &v) in w.iter().enumerate() {
        fw[i] = Complex::new(v, 0.0);
    }
    fwd.process(&mut fx);
    fwd.process(&mut fw);
    for (a, b) in fx.iter_mut().zip(fw.iter()) {
        *a *= *b;
    }
    inv.process(&mut fx);
    let scale = 1.0 / size as f64;
    let mut out = vec![0.0; n_out];
    for (m, o) in out.iter_mut().enumerate() {
        let j = off + m as i64;
        if j >= 0 && (j as usize) < full {
            *o = fx[j as usize].re * scale;
        }
    }
    out
}

/// Work threshold above which the FFT path wins.
const FFT_WORK_THRESHOLD: usize = 1 << 21;

/// Automatic selection between the direct and FFT paths.
pub fn lag_convolve(x: &[f64], w: &[f64], off: i64, n_out: usize) -> Vec<f64> {
    let direct_work = n_out.saturating_mul(w.len().min(x.len()));
    if direct_work > FFT_WORK_THRESHOLD {
        lag_convolve_fft(x, w, off, n_out)
    } else {
        lag_convolve_direct(x, w, off, n_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn matches_naive_small() {
        let x = [1.0, 2.0, -1.0];
        let w = [0.5, 0.25];
        // full conv: [0.5, 1.25, 0.0, -0.25]
        let out = lag_convolve_direct(&x, &w, 0, 4);
        assert_eq!(out, vec![0.5, 1.25, 0.0, -0.25]);
        let out = lag_convolve_fft(&x, &w, 0, 4);
        for (a, b) in out.iter().zip([0.5, 1.25, 0.0, -0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_agrees_with_direct_on_256_grid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..256).map(|_| rng.random::<f64>() - 0.5).collect();
        let w: Vec<f64> = (0..256).map(|i| 1.0 / (1.0 + i as f64).sqrt()).collect();
        let a = lag_convolve_direct(&x, &w, 10, 200);
        let b = lag_convolve_fft(&x, &w, 10, 200);
        for (u, v) in a.iter().zip(b.iter()) {
            assert!((u - v).abs() < 1e-10, "direct {u} vs fft {v}");
        }
    }

    #[test]
    fn out_of_range_indices_are_zero() {
        let x = [1.0, 1.0];
        let w = [1.0];
        let out = lag_convolve_direct(&x, &w, -2, 3);
        assert_eq!(out, vec![0.0, 0.0, 1.0]);
    }
}
