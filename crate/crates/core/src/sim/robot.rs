//! Surrogate for the robot's inner velocity loop.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SAMPLE_PERIOD};

/// Unity-DC-gain second-order lag `ω² / (s² + 2ζω s + ω²)` from `v_ref` to `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotSurrogate {
    pub natural_freq: f64,
    pub damping_ratio: f64,
}

impl Default for RobotSurrogate {
    fn default() -> Self {
        Self {
            natural_freq: 25.0,
            damping_ratio: 0.7,
        }
    }
}

impl RobotSurrogate {
    pub fn validate(&self) -> Result<()> {
        if !(self.natural_freq > 0.0 && self.damping_ratio > 0.0) {
            return Err(Error::InvalidParameter(
                "robot natural frequency and damping ratio must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Magnitude of the continuous transfer function at `omega` rad/s.
    pub fn magnitude(&self, omega: f64) -> f64 {
        let wn = self.natural_freq;
        let re = wn * wn - omega * omega;
        let im = 2.0 * self.damping_ratio * wn * omega;
        wn * wn / (re * re + im * im).sqrt()
    }
}

/// Position, velocity and acceleration of the surrogate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RobotState {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl RobotState {
    pub fn at(x: f64) -> Self {
        Self { x, v: 0.0, a: 0.0 }
    }
}

/// One backward-Euler step of the lag; the position integrates the new velocity.
pub fn robot_step(g: &RobotSurrogate, state: &mut RobotState, v_ref: f64) -> f64 {
    robot_step_with(g, state, v_ref, SAMPLE_PERIOD)
}

pub fn robot_step_with(g: &RobotSurrogate, state: &mut RobotState, v_ref: f64, ts: f64) -> f64 {
    let wn = g.natural_freq;
    let z = g.damping_ratio;
    // a' = a + Ts (ω²(u − v') − 2ζω a'),  v' = v + Ts a'
    let a = (state.a + ts * wn * wn * (v_ref - state.v)) / (1.0 + 2.0 * z * wn * ts + ts * ts * wn * wn);
    state.a = a;
    state.v += ts * a;
    state.x += ts * state.v;
    state.v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converges_to_constant_reference() {
        let g = RobotSurrogate::default();
        let mut s = RobotState::default();
        let n = (5.0 / (g.damping_ratio * g.natural_freq) / SAMPLE_PERIOD).ceil() as usize;
        let mut v = 0.0;
        for _ in 0..n {
            v = robot_step(&g, &mut s, 0.2);
        }
        assert!((v - 0.2).abs() < 0.002, "v = {v}");
    }

    #[test]
    fn rest_stays_at_rest() {
        let g = RobotSurrogate::default();
        let mut s = RobotState::default();
        for _ in 0..1000 {
            assert_eq!(robot_step(&g, &mut s, 0.0), 0.0);
        }
        assert_eq!(s.x, 0.0);
    }

    #[test]
    fn resonance_gain_matches_transfer_function() {
        let g = RobotSurrogate::default();
        let wn = g.natural_freq;
        // closed form at ω = ωn is 1/(2ζ)
        assert!((g.magnitude(wn) - 1.0 / (2.0 * g.damping_ratio)).abs() < 1e-12);

        // discrete response: backward Euler maps s -> (1 - z^-1)/Ts
        let ts = SAMPLE_PERIOD;
        let (c, sn) = ((wn * ts).cos(), (wn * ts).sin());
        let (sr, si) = ((1.0 - c) / ts, sn / ts); // (1 - e^{-jωTs})/Ts
        let re = sr * sr - si * si + 2.0 * g.damping_ratio * wn * sr + wn * wn;
        let im = 2.0 * sr * si + 2.0 * g.damping_ratio * wn * si;
        let discrete = wn * wn / (re * re + im * im).sqrt();
        assert!((discrete / g.magnitude(wn) - 1.0).abs() < 0.05);

        let mut s = RobotState::default();
        let n = 20_000;
        let mut peak: f64 = 0.0;
        for k in 0..n {
            let v = robot_step(&g, &mut s, (wn * k as f64 * ts).sin());
            if k > n / 2 {
                peak = peak.max(v.abs());
            }
        }
        assert!((peak / discrete - 1.0).abs() < 2e-3, "{peak} vs {discrete}");
    }
}
