//! Shared FFT plans.
//!
//! All transforms in the crate go through one process-wide planner so that
//! repeated calls at the same length reuse the same plan, including from
//! rayon worker threads.

use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

static PLANNER: Lazy<Mutex<FftPlanner<f64>>> = Lazy::new(|| Mutex::new(FftPlanner::new()));

pub(crate) fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER
        .lock()
        .expect("fft planner lock poisoned")
        .plan_fft_forward(len)
}

pub(crate) fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    PLANNER
        .lock()
        .expect("fft planner lock poisoned")
        .plan_fft_inverse(len)
}

/// Forward DFT of a real signal, returned as a full complex spectrum.
pub(crate) fn real_forward(signal: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward_plan(signal.len()).process(&mut buf);
    buf
}

/// Inverse DFT scaled by 1/n, so `inverse(forward(x)) == x`.
pub(crate) fn inverse_normalized(spectrum: &mut [Complex64]) {
    let n = spectrum.len();
    inverse_plan(n).process(spectrum);
    let scale = 1.0 / n as f64;
    for v in spectrum.iter_mut() {
        *v *= scale;
    }
}

/// Linear convolution via zero-padded FFTs, truncated to `out_len` samples.
pub(crate) fn convolve_truncated(a: &[f64], b: &[f64], out_len: usize) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return vec![0.0; out_len];
    }
    let full = a.len() + b.len() - 1;
    let size = full.next_power_of_two();
    let mut fa: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut fb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fa.resize(size, Complex64::new(0.0, 0.0));
    fb.resize(size, Complex64::new(0.0, 0.0));
    let plan = forward_plan(size);
    plan.process(&mut fa);
    plan.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y;
    }
    inverse_normalized(&mut fa);
    (0..out_len)
        .map(|i| if i < full { fa[i].re } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_inverse_round_trip() {
        let signal: Vec<f64> = (0..37).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut spec = real_forward(&signal);
        inverse_normalized(&mut spec);
        for (orig, rec) in signal.iter().zip(spec.iter()) {
            assert!((orig - rec.re).abs() < 1e-12);
            assert!(rec.im.abs() < 1e-12);
        }
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let a = [1.0, 2.0, -1.0, 0.5];
        let b = [0.5, -0.25, 1.0];
        let full = a.len() + b.len() - 1;
        let got = convolve_truncated(&a, &b, full);
        for (i, &g) in got.iter().enumerate() {
            let mut want = 0.0;
            for (j, &aj) in a.iter().enumerate() {
                if i >= j && i - j < b.len() {
                    want += aj * b[i - j];
                }
            }
            assert!((g - want).abs() < 1e-12, "lag {i}: {g} vs {want}");
        }
    }

    #[test]
    fn convolution_truncates_and_pads() {
        let a = [1.0, 1.0];
        let b = [1.0, 1.0];
        let got = convolve_truncated(&a, &b, 5);
        assert_eq!(got.len(), 5);
        assert!((got[0] - 1.0).abs() < 1e-12);
        assert!((got[1] - 2.0).abs() < 1e-12);
        assert!((got[2] - 1.0).abs() < 1e-12);
        assert_eq!(got[3], 0.0);
        assert_eq!(got[4], 0.0);
    }
}
