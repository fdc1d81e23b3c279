//! Single-sided amplitude spectrum.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Zero-padding factor: the FFT length is the next power of two at least this
/// many times the signal length, which keeps scalloping loss of a pure tone well
/// under 1%.
pub const PAD_FACTOR: usize = 8;

/// Single-sided spectrum of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin frequencies, Hz.
    pub freqs: Vec<f64>,
    /// `2|X_k|/N` (DC and Nyquist bins `|X_k|/N`), with `N` the true sample count.
    pub amplitude: Vec<f64>,
    /// Number of signal samples `N`.
    pub n: usize,
    /// FFT length `M` after zero padding.
    pub fft_len: usize,
}

impl Spectrum {
    pub fn compute(y: &[f64], fs: f64) -> Self {
        let n = y.len();
        let m = (PAD_FACTOR * n.max(1)).next_power_of_two();
        let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(m, Complex64::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(m).process(&mut buf);
        let half = m / 2;
        let amplitude = (0..=half)
            .map(|k| {
                let a = buf[k].norm() / n.max(1) as f64;
                if k == 0 || k == half {
                    a
                } else {
                    2.0 * a
                }
            })
            .collect();
        let freqs = (0..=half).map(|k| k as f64 * fs / m as f64).collect();
        Self {
            freqs,
            amplitude,
            n,
            fft_len: m,
        }
    }

    /// Largest amplitude among bins with frequency in `[f_lo, f_hi]`.
    pub fn max_in_band(&self, f_lo: f64, f_hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.amplitude)
            .filter(|(f, _)| **f >= f_lo && **f <= f_hi)
            .map(|(_, a)| *a)
            .fold(0.0, f64::max)
    }
}
