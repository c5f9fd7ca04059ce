//! Thin 2D FFT layer over rustfft, plus signed-mode frequency helpers.
//!
//! All fields are complex and stored row-major (`idx = iy*n + ix`). A 2D
//! transform is two passes of 1D transforms with an explicit transpose in
//! between, which keeps every 1D pass contiguous.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Planned forward/inverse transforms for an `n x n` complex field.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn pass(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for row in data.chunks_exact_mut(n) {
            fft.process_with_scratch(row, &mut scratch);
        }
    }

    /// In-place forward 2D DFT (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        self.pass(data, &self.forward.clone());
        transpose(data, self.n);
        self.pass(data, &self.forward.clone());
        transpose(data, self.n);
    }

    /// In-place inverse 2D DFT, normalized by `1/n^2`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.n * self.n);
        self.pass(data, &self.inverse.clone());
        transpose(data, self.n);
        self.pass(data, &self.inverse.clone());
        transpose(data, self.n);
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

/// Square in-place transpose, blocked for cache friendliness.
pub fn transpose(data: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for ib in (0..n).step_by(B) {
        for jb in (ib..n).step_by(B) {
            for i in ib..(ib + B).min(n) {
                let j0 = if ib == jb { i + 1 } else { jb };
                for j in j0..(jb + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Signed integer mode for DFT bin `m` of an `n`-point transform.
#[inline]
pub fn signed_mode(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Angular frequency of bin `m` for a periodic box of period `period`.
#[inline]
pub fn bin_freq(m: usize, n: usize, period: f64) -> f64 {
    signed_mode(m, n) as f64 * std::f64::consts::TAU / period
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_and_plane_wave() {
        let n = 32;
        let fft = Fft2::new(n);
        let mut data: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new((i % 7) as f64, (i % 3) as f64))
            .collect();
        let orig = data.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }

        // single plane wave lands in a single bin
        let (mx, my) = (3usize, 29usize);
        for iy in 0..n {
            for ix in 0..n {
                let ph = std::f64::consts::TAU * (mx * ix + my * iy) as f64 / n as f64;
                data[iy * n + ix] = Complex64::new(0.0, ph).exp();
            }
        }
        fft.forward(&mut data);
        for iy in 0..n {
            for ix in 0..n {
                let expect = if ix == mx && iy == my {
                    (n * n) as f64
                } else {
                    0.0
                };
                assert!(
                    (data[iy * n + ix] - expect).norm() < 1e-9,
                    "bin ({ix},{iy})"
                );
            }
        }
    }

    #[test]
    fn signed_modes() {
        assert_eq!(signed_mode(0, 8), 0);
        assert_eq!(signed_mode(3, 8), 3);
        assert_eq!(signed_mode(4, 8), -4);
        assert_eq!(signed_mode(7, 8), -1);
    }
}
