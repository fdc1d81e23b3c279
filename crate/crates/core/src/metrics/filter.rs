//! Butterworth band-pass design (biquad cascade) and zero-phase filtering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::{Error, Result};

/// One second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }
}

/// Cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Digital Butterworth band-pass with `order` prototype poles (so
    /// `order` biquads), pass band `[f_lo, f_hi]` Hz at sample rate `fs`,
    /// unity gain at the geometric centre of the pre-warped band.
    pub fn butter_bandpass(order: usize, f_lo: f64, f_hi: f64, fs: f64) -> Result<Self> {
        if order == 0 || !(0.0 < f_lo && f_lo < f_hi && f_hi < fs / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "band-pass needs 0 < {f_lo} < {f_hi} < fs/2 and order >= 1"
            )));
        }
        let w_lo = 2.0 * fs * (PI * f_lo / fs).tan();
        let w_hi = 2.0 * fs * (PI * f_hi / fs).tan();
        let w0 = (w_lo * w_hi).sqrt();
        let bw = w_hi - w_lo;

        let mut sections = Vec::with_capacity(order);
        for k in 0..order {
            // left-half-plane Butterworth prototype pole
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            let p = Complex64::from_polar(1.0, theta);
            // low-pass to band-pass: s² − p·bw·s + w0² = 0
            let half = p * (bw / 2.0);
            let disc = (half * half - w0 * w0).sqrt();
            for s in [half + disc, half - disc] {
                if s.im > 0.0 {
                    let z = (1.0 + s / (2.0 * fs)) / (1.0 - s / (2.0 * fs));
                    sections.push(Biquad {
                        b: [1.0, 0.0, -1.0],
                        a: [-2.0 * z.re, z.norm_sqr()],
                    });
                }
            }
        }
        if sections.len() != order {
            return Err(Error::Numeric("band-pass pole pairing failed".into()));
        }
        let mut sos = Sos { sections };
        let wc = 2.0 * (w0 / (2.0 * fs)).atan();
        let g = sos.response(wc).norm();
        let per = g.powf(-1.0 / order as f64);
        for s in &mut sos.sections {
            for b in &mut s.b {
                *b *= per;
            }
        }
        Ok(sos)
    }

    /// Frequency response at digital angular frequency `w` (rad/sample).
    pub fn response(&self, w: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections.iter().map(|s| s.response(z_inv)).product()
    }

    /// Causal filtering with direct-form-II-transposed sections and initial
    /// states `zi` (two per section), which are updated in place.
    pub fn filter_with(&self, x: &[f64], zi: &mut [[f64; 2]]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (s, z) in self.sections.iter().zip(zi.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            for v in y.iter_mut() {
                let xin = *v;
                let out = b0 * xin + z[0];
                z[0] = b1 * xin - a1 * out + z[1];
                z[1] = b2 * xin - a2 * out;
                *v = out;
            }
        }
        y
    }

    /// Section states for a unit step that has been applied forever.
    pub fn step_initial_state(&self) -> Vec<[f64; 2]> {
        let mut u = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let y = s.dc_gain() * u;
                let z1 = s.b[2] * u - s.a[1] * y;
                let z0 = s.b[1] * u - s.a[0] * y + z1;
                u = y;
                [z0, z1]
            })
            .collect()
    }

    /// Edge padding used by [`Sos::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    /// Forward-backward (zero-phase) filtering with odd-extension edge padding
    /// and steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pad = self.pad_len();
        if x.len() <= pad {
            return Err(Error::SegmentTooShort {
                got: x.len(),
                need: pad + 1,
            });
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let zi = self.step_initial_state();
        let scaled = |k: f64| zi.iter().map(|z| [z[0] * k, z[1] * k]).collect::<Vec<_>>();

        let mut fwd = self.filter_with(&ext, &mut scaled(ext[0]));
        fwd.reverse();
        let mut back = self.filter_with(&fwd, &mut scaled(fwd[0]));
        back.reverse();
        Ok(back[pad..pad + n].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sos() -> Sos {
        Sos::butter_bandpass(4, 1.0, 20.0, 500.0).unwrap()
    }

    fn gain_hz(s: &Sos, f: f64) -> f64 {
        s.response(2.0 * PI * f / 500.0).norm()
    }

    #[test]
    fn passband_and_edges() {
        let s = sos();
        assert_eq!(s.sections.len(), 4);
        for f in [3.0, 5.0, 8.0, 12.0] {
            assert!((gain_hz(&s, f) - 1.0).abs() < 0.01, "gain at {f} Hz = {}", gain_hz(&s, f));
        }
        // −3 dB at both edges (the bilinear pre-warp places them exactly)
        for f in [1.0, 20.0] {
            assert!((gain_hz(&s, f) - 0.5f64.sqrt()).abs() < 1e-6, "{f} Hz");
        }
        // ≥ 20 dB down at 40 Hz, ≥ 45 dB at the drill line, and nothing at DC
        assert!(gain_hz(&s, 40.0) < 0.1);
        assert!(gain_hz(&s, 75.0) < 5e-3);
        assert!(gain_hz(&s, 1e-6) < 1e-9);
    }

    #[test]
    fn stable_poles() {
        for sec in sos().sections {
            assert!(sec.a[1] < 1.0 && sec.a[1] > 0.0);
        }
    }

    #[test]
    fn filtfilt_rejects_short_input() {
        assert!(sos().filtfilt(&[0.0; 10]).is_err());
    }

    #[test]
    fn filtfilt_keeps_passband_phase() {
        let s = sos();
        // the 1 Hz high-pass edge rings for seconds, so compare far from the ends
        let n = 6000;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * 8.0 * k as f64 / 500.0).sin()).collect();
        let y = s.filtfilt(&x).unwrap();
        for k in 2500..3500 {
            assert!((y[k] - x[k] * gain_hz(&s, 8.0).powi(2)).abs() < 1e-4);
        }
    }
}
