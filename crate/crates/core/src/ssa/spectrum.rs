//! Zero-padded periodogram used to place SSA components in frequency bands.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Smallest power of two that is at least four times `n`.
pub fn padded_len(n: usize) -> usize {
    (4 * n.max(1)).next_power_of_two()
}

/// A reusable forward transform for series of one length.
pub struct Periodogram {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
}

impl Periodogram {
    pub fn new(n: usize) -> Self {
        let len = padded_len(n);
        let fft = FftPlanner::new().plan_fft_forward(len);
        Self {
            n,
            fft,
            buf: vec![Complex::default(); len],
        }
    }

    pub fn padded_len(&self) -> usize {
        self.buf.len()
    }

    /// Frequency in cycles per month of the strongest bin in `[0, 1/2]`,
    /// or `None` for an all-zero series. The mean is not removed, so a
    /// monotone ramp peaks at or near zero frequency. Ties go to the lower
    /// frequency.
    pub fn dominant_frequency(&mut self, series: &[f64]) -> Option<f64> {
        assert_eq!(series.len(), self.n, "periodogram built for another length");
        for (b, &x) in self.buf.iter_mut().zip(series) {
            *b = Complex::new(x, 0.0);
        }
        for b in &mut self.buf[self.n..] {
            *b = Complex::default();
        }
        self.fft.process(&mut self.buf);
        let len = self.buf.len();
        let mut best = (0, 0.0);
        for (k, c) in self.buf[..=len / 2].iter().enumerate() {
            let power = c.norm_sqr();
            if power > best.1 {
                best = (k, power);
            }
        }
        (best.1 > 0.0).then(|| best.0 as f64 / len as f64)
    }
}

/// One-off convenience over [`Periodogram`].
pub fn dominant_frequency(series: &[f64]) -> Option<f64> {
    Periodogram::new(series.len()).dominant_frequency(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(period: f64, n: usize) -> Vec<f64> {
        (0..n).map(|t| (2.0 * PI * t as f64 / period).sin()).collect()
    }

    #[test]
    fn padding() {
        assert_eq!(padded_len(372), 2048);
        assert_eq!(padded_len(256), 1024);
    }

    #[test]
    fn known_periods() {
        let res = 1.0 / padded_len(372) as f64;
        for p in [12.0, 6.0, 4.0, 24.0] {
            let f = dominant_frequency(&sine(p, 372)).unwrap();
            assert!((f - 1.0 / p).abs() <= res, "period {p}: {f}");
        }
    }

    #[test]
    fn ramp_is_low_frequency() {
        let ramp: Vec<f64> = (0..372).map(|t| t as f64).collect();
        assert!(dominant_frequency(&ramp).unwrap() < 1.0 / 120.0);
        let down: Vec<f64> = (0..372).map(|t| -0.1 * t as f64).collect();
        assert!(dominant_frequency(&down).unwrap() < 1.0 / 120.0);
    }

    #[test]
    fn zero_series_has_no_frequency() {
        assert_eq!(dominant_frequency(&[0.0; 50]), None);
    }

    #[test]
    fn brute_force_dft_agrees() {
        let x: Vec<f64> = (0..40).map(|t| ((t * 7 % 11) as f64).cos() + 0.1 * t as f64).collect();
        let len = padded_len(40);
        let mut best = (0, 0.0);
        for k in 0..=len / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / len as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let p = re * re + im * im;
            if p > best.1 {
                best = (k, p);
            }
        }
        assert_eq!(dominant_frequency(&x), Some(best.0 as f64 / len as f64));
    }
}
