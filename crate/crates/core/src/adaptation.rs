//! Subtask-driven adaptation of admittance damping and fractional order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::admittance::ControllerParams;
use crate::{Error, Result, Subtask};

/// Controller condition of a testing trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ControllerMode {
    /// C1: fixed integer-order controller.
    #[serde(rename = "c1")]
    FixedIoac,
    /// C2: integer order, damping adapted at subtask transitions.
    #[serde(rename = "c2")]
    AdaptiveIoac,
    /// C3: damping and fractional order adapted.
    #[serde(rename = "c3")]
    AdaptiveFoac,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 3] = [
        ControllerMode::FixedIoac,
        ControllerMode::AdaptiveIoac,
        ControllerMode::AdaptiveFoac,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ControllerMode::FixedIoac => "C1",
            ControllerMode::AdaptiveIoac => "C2",
            ControllerMode::AdaptiveFoac => "C3",
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c1" => Ok(ControllerMode::FixedIoac),
            "c2" => Ok(ControllerMode::AdaptiveIoac),
            "c3" => Ok(ControllerMode::AdaptiveFoac),
            other => Err(Error::InvalidParameter(format!("unknown controller mode {other:?}"))),
        }
    }
}

/// Target values per subtask and the ramp window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptationConfig {
    pub mode: ControllerMode,
    pub mass: f64,
    pub b_low: f64,
    pub b_nom: f64,
    pub b_high: f64,
    pub alpha_low: f64,
    pub alpha_nom: f64,
    pub t_w_ms: f64,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            mode: ControllerMode::AdaptiveFoac,
            mass: 50.0,
            b_low: 200.0,
            b_nom: 300.0,
            b_high: 400.0,
            alpha_low: 0.85,
            alpha_nom: 1.0,
            t_w_ms: 200.0,
        }
    }
}

impl AdaptationConfig {
    pub fn with_mode(mode: ControllerMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_low < self.b_nom && self.b_nom < self.b_high && self.b_low > 0.0) {
            return Err(Error::InvalidParameter("need 0 < b_low < b_nom < b_high".into()));
        }
        if !(0.0 < self.alpha_low && self.alpha_low <= self.alpha_nom && self.alpha_nom <= 1.0) {
            return Err(Error::InvalidParameter("need 0 < alpha_low <= alpha_nom <= 1".into()));
        }
        if !(self.t_w_ms > 0.0) {
            return Err(Error::InvalidParameter("t_w must be positive".into()));
        }
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter("mass must be positive".into()));
        }
        Ok(())
    }

    pub fn t_w(&self) -> f64 {
        self.t_w_ms * 1e-3
    }

    /// `(b, α)` the policy settles on for `subtask`.
    pub fn target_params(&self, subtask: Subtask) -> (f64, f64) {
        match self.mode {
            ControllerMode::FixedIoac => (self.b_high, self.alpha_nom),
            ControllerMode::AdaptiveIoac | ControllerMode::AdaptiveFoac => {
                let b = match subtask {
                    Subtask::Idle => self.b_nom,
                    Subtask::Driving => self.b_low,
                    Subtask::Contact => self.b_high,
                };
                let alpha = if self.mode == ControllerMode::AdaptiveFoac && subtask == Subtask::Contact {
                    self.alpha_low
                } else {
                    self.alpha_nom
                };
                (b, alpha)
            }
        }
    }
}

/// Linear ramp of one scalar over a fixed window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RampState {
    pub start_value: f64,
    pub end_value: f64,
    pub start_time: f64,
    pub active: bool,
}

impl RampState {
    fn settled(value: f64) -> Self {
        Self {
            start_value: value,
            end_value: value,
            start_time: 0.0,
            active: false,
        }
    }

    pub fn value(&self, t: f64, window: f64) -> f64 {
        if !self.active {
            return self.end_value;
        }
        let s = ((t - self.start_time) / window).clamp(0.0, 1.0);
        self.start_value + (self.end_value - self.start_value) * s
    }

    fn retarget(&mut self, t: f64, window: f64, target: f64) {
        let now = self.value(t, window);
        *self = Self {
            start_value: now,
            end_value: target,
            start_time: t,
            active: true,
        };
    }

    fn settle(&mut self, t: f64, window: f64) {
        if self.active && t - self.start_time >= window {
            *self = Self::settled(self.end_value);
        }
    }
}

/// Adaptation state machine fed with processed subtask labels.
#[derive(Debug, Clone)]
pub struct AdaptationPolicy {
    config: AdaptationConfig,
    label: Subtask,
    damping: RampState,
    alpha: RampState,
}

impl AdaptationPolicy {
    /// Starts settled on the Idle targets.
    pub fn new(config: AdaptationConfig) -> Result<Self> {
        config.validate()?;
        let (b, a) = config.target_params(Subtask::Idle);
        Ok(Self {
            config,
            label: Subtask::Idle,
            damping: RampState::settled(b),
            alpha: RampState::settled(a),
        })
    }

    pub fn config(&self) -> &AdaptationConfig {
        &self.config
    }

    pub fn label(&self) -> Subtask {
        self.label
    }

    /// Feed the latest processed label at time `t` and read the parameters to apply.
    pub fn update(&mut self, processed: Subtask, t: f64) -> ControllerParams {
        let window = self.config.t_w();
        if processed != self.label {
            self.label = processed;
            let (b, a) = self.config.target_params(processed);
            self.damping.retarget(t, window, b);
            self.alpha.retarget(t, window, a);
        }
        let params = ControllerParams {
            mass: self.config.mass,
            damping: self.damping.value(t, window),
            alpha: self.alpha.value(t, window),
        };
        self.damping.settle(t, window);
        self.alpha.settle(t, window);
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(mode: ControllerMode) -> AdaptationPolicy {
        AdaptationPolicy::new(AdaptationConfig::with_mode(mode)).unwrap()
    }

    #[test]
    fn target_table() {
        let c3 = AdaptationConfig::with_mode(ControllerMode::AdaptiveFoac);
        assert_eq!(c3.target_params(Subtask::Contact), (400.0, 0.85));
        assert_eq!(c3.target_params(Subtask::Idle), (300.0, 1.0));
        assert_eq!(c3.target_params(Subtask::Driving), (200.0, 1.0));
        let c2 = AdaptationConfig::with_mode(ControllerMode::AdaptiveIoac);
        assert_eq!(c2.target_params(Subtask::Driving), (200.0, 1.0));
        assert_eq!(c2.target_params(Subtask::Contact), (400.0, 1.0));
        let c1 = AdaptationConfig::with_mode(ControllerMode::FixedIoac);
        for s in Subtask::ALL {
            assert_eq!(c1.target_params(s), (400.0, 1.0));
        }
    }

    #[test]
    fn driving_to_contact_ramp() {
        let mut p = policy(ControllerMode::AdaptiveIoac);
        p.update(Subtask::Driving, 0.0);
        let t0 = 5.0;
        let p0 = p.update(Subtask::Contact, t0);
        assert_eq!(p0.damping, 200.0);
        assert!((p.update(Subtask::Contact, t0 + 0.1).damping - 300.0).abs() < 1e-9);
        assert!((p.update(Subtask::Contact, t0 + 0.2).damping - 400.0).abs() < 1e-9);
        assert_eq!(p.update(Subtask::Contact, t0 + 3.0).damping, 400.0);
    }

    #[test]
    fn alpha_ramp_under_c3() {
        let mut p = policy(ControllerMode::AdaptiveFoac);
        p.update(Subtask::Driving, 0.0);
        let t0 = 4.0;
        p.update(Subtask::Contact, t0);
        assert!((p.update(Subtask::Contact, t0 + 0.1).alpha - 0.925).abs() < 1e-9);
        assert!((p.update(Subtask::Contact, t0 + 0.2).alpha - 0.85).abs() < 1e-12);
    }

    #[test]
    fn mid_ramp_change_starts_from_current_value() {
        let mut p = policy(ControllerMode::AdaptiveIoac);
        let t0 = 2.0;
        p.update(Subtask::Driving, t0);
        p.update(Subtask::Contact, t0 + 0.1);
        // midpoint of 300 -> 200 is 250; new ramp 250 -> 400 over 0.2 s
        assert!((p.update(Subtask::Contact, t0 + 0.1).damping - 250.0).abs() < 1e-9);
        assert!((p.update(Subtask::Contact, t0 + 0.2).damping - 325.0).abs() < 1e-9);
        assert!((p.update(Subtask::Contact, t0 + 0.3).damping - 400.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_mode_is_constant() {
        let mut p = policy(ControllerMode::FixedIoac);
        for (i, s) in [Subtask::Idle, Subtask::Driving, Subtask::Contact, Subtask::Driving]
            .iter()
            .enumerate()
        {
            for k in 0..200 {
                let q = p.update(*s, i as f64 + k as f64 * 0.002);
                assert_eq!((q.damping, q.alpha), (400.0, 1.0));
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = AdaptationConfig::default();
        c.b_low = 500.0;
        assert!(AdaptationPolicy::new(c).is_err());
        let mut c = AdaptationConfig::default();
        c.alpha_low = 1.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("C3".parse::<ControllerMode>().unwrap(), ControllerMode::AdaptiveFoac);
        assert!("c4".parse::<ControllerMode>().is_err());
    }
}
