//! Workpiece and drill model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spring-damper workpiece with a sinusoidal drill disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    /// Surface position along the drilling axis, m.
    pub x_w: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub drill_amplitude: f64,
    pub drill_freq: f64,
    pub target_depth: f64,
}

impl EnvironmentModel {
    /// Cardboard workpiece used in the testing experiments.
    pub fn cardboard() -> Self {
        Self {
            x_w: 0.3,
            stiffness: 4000.0,
            damping: 50.0,
            drill_amplitude: 1.5,
            drill_freq: 75.0,
            target_depth: 0.005,
        }
    }

    /// Stiffer plywood workpiece and slower drill used in the training experiments.
    pub fn plywood() -> Self {
        Self {
            x_w: 0.3,
            stiffness: 12000.0,
            damping: 50.0,
            drill_amplitude: 2.0,
            drill_freq: 2000.0 / 60.0,
            target_depth: 0.005,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.stiffness > 0.0
            && self.damping >= 0.0
            && self.drill_amplitude >= 0.0
            && self.drill_freq >= 0.0
            && self.target_depth > 0.0
            && self.x_w.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("invalid environment model".into()))
        }
    }
}

/// Returns `(F_env, penetration)` for tool position `x` and velocity `v`.
pub fn env_force(e: &EnvironmentModel, x: f64, v: f64, drill_on: bool, t: f64) -> (f64, f64) {
    let pen = (x - e.x_w).max(0.0);
    if pen <= 0.0 {
        return (0.0, 0.0);
    }
    let mut f = e.stiffness * pen + e.damping * v;
    if drill_on {
        f += e.drill_amplitude * (2.0 * PI * e.drill_freq * t).sin();
    }
    (f.max(0.0), pen)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_space() {
        let e = EnvironmentModel::cardboard();
        assert_eq!(env_force(&e, e.x_w - 0.01, 0.1, true, 0.3), (0.0, 0.0));
    }

    #[test]
    fn spring_law() {
        let mut e = EnvironmentModel::cardboard();
        e.stiffness = 20000.0;
        let (f, p) = env_force(&e, e.x_w + 0.001, 0.0, false, 0.0);
        assert!((p - 0.001).abs() < 1e-12);
        assert!((f - 20.0).abs() < 1e-9);
    }

    #[test]
    fn never_pulls() {
        let e = EnvironmentModel::cardboard();
        let (f, _) = env_force(&e, e.x_w + 1e-5, -0.2, true, 0.0);
        assert_eq!(f, 0.0);
    }
}
