//! Operator model: an impedance pulling the handle toward an intended
//! trajectory, with phase changes driven by what the operator perceives.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum-jerk profile from `x0` to `x1` over `T` seconds; returns `(x, v)`.
///
/// `t` is clamped to `[0, T]`, so the profile holds its end points outside.
pub fn min_jerk(x0: f64, x1: f64, duration: f64, t: f64) -> (f64, f64) {
    let tau = (t / duration).clamp(0.0, 1.0);
    let d = x1 - x0;
    let tau2 = tau * tau;
    let tau3 = tau2 * tau;
    let x = x0 + d * (10.0 * tau3 - 15.0 * tau3 * tau + 6.0 * tau3 * tau2);
    let v = d / duration * (30.0 * tau2 - 60.0 * tau3 + 30.0 * tau2 * tau2);
    (x, v)
}

/// Population-level operator parameters; individual operators are drawn from these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HumanConfig {
    /// Arm stiffness while guiding, N/m.
    pub drive_stiffness: f64,
    /// Arm damping while guiding, N·s/m.
    pub drive_damping: f64,
    /// Co-contracted arm stiffness while drilling, N/m.
    pub contact_stiffness: f64,
    /// Co-contracted arm damping while drilling, N·s/m.
    pub contact_damping: f64,
    /// Relative per-subject jitter on the four impedances.
    pub impedance_jitter: f64,
    pub grab_time_min: f64,
    pub grab_time_max: f64,
    pub grab_ramp_min: f64,
    pub grab_ramp_max: f64,
    pub reach_time_min: f64,
    pub reach_time_max: f64,
    /// The reach stops this far short of the surface, then creeps in.
    pub approach_gap: f64,
    pub creep_speed: f64,
    pub feed_rate: f64,
    pub feed_jitter: f64,
    /// Relative error of the operator's guess of workpiece stiffness.
    pub stiffness_estimate_jitter: f64,
    pub reaction_delay: f64,
    pub stiffen_time: f64,
    pub retract_distance: f64,
    pub retract_time: f64,
    pub force_noise: f64,
}

impl Default for HumanConfig {
    fn default() -> Self {
        Self {
            drive_stiffness: 300.0,
            drive_damping: 30.0,
            contact_stiffness: 400.0,
            contact_damping: 20.0,
            impedance_jitter: 0.2,
            grab_time_min: 1.0,
            grab_time_max: 2.0,
            grab_ramp_min: 0.1,
            grab_ramp_max: 0.3,
            reach_time_min: 1.8,
            reach_time_max: 2.6,
            approach_gap: 0.005,
            creep_speed: 0.01,
            feed_rate: 0.002,
            feed_jitter: 0.2,
            stiffness_estimate_jitter: 0.2,
            reaction_delay: 0.1,
            stiffen_time: 0.25,
            retract_distance: 0.05,
            retract_time: 1.0,
            force_noise: 0.25,
        }
    }
}

impl HumanConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.drive_stiffness,
            self.drive_damping,
            self.contact_stiffness,
            self.contact_damping,
            self.grab_ramp_min,
            self.reach_time_min,
            self.creep_speed,
            self.feed_rate,
            self.stiffen_time,
            self.retract_time,
        ];
        let ordered = self.grab_time_min <= self.grab_time_max
            && self.grab_ramp_min <= self.grab_ramp_max
            && self.reach_time_min <= self.reach_time_max;
        let jitters = [self.impedance_jitter, self.feed_jitter, self.stiffness_estimate_jitter];
        if positive.iter().all(|&p| p > 0.0)
            && ordered
            && jitters.iter().all(|&j| (0.0..1.0).contains(&j))
            && self.grab_time_min >= 0.0
            && self.force_noise >= 0.0
            && self.reaction_delay >= 0.0
            && self.approach_gap >= 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter("invalid human model parameters".into()))
        }
    }

    /// Arm impedances of one subject.
    pub fn sample_subject<R: Rng>(&self, rng: &mut R) -> SubjectImpedance {
        let j = self.impedance_jitter;
        let mut jit = |x: f64| x * rng.random_range(1.0 - j..=1.0 + j);
        SubjectImpedance {
            drive_stiffness: jit(self.drive_stiffness),
            drive_damping: jit(self.drive_damping),
            contact_stiffness: jit(self.contact_stiffness),
            contact_damping: jit(self.contact_damping),
        }
    }

    /// Trial-level draws (timing, intent) for a subject facing a workpiece at `x_w`
    /// of nominal stiffness `k_env`.
    pub fn sample_trial<R: Rng>(&self, subject: SubjectImpedance, x_w: f64, k_env: f64, rng: &mut R) -> HumanModel {
        HumanModel {
            impedance: subject,
            t_grab: rng.random_range(self.grab_time_min..=self.grab_time_max),
            grab_ramp: rng.random_range(self.grab_ramp_min..=self.grab_ramp_max),
            reach_time: rng.random_range(self.reach_time_min..=self.reach_time_max),
            x_target: x_w,
            approach_gap: self.approach_gap,
            creep_speed: self.creep_speed,
            feed_rate: self.feed_rate * rng.random_range(1.0 - self.feed_jitter..=1.0 + self.feed_jitter),
            stiffness_estimate: k_env
                * rng.random_range(1.0 - self.stiffness_estimate_jitter..=1.0 + self.stiffness_estimate_jitter),
            reaction_delay: self.reaction_delay,
            stiffen_time: self.stiffen_time,
            retract_distance: self.retract_distance,
            retract_time: self.retract_time,
            force_noise: self.force_noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectImpedance {
    pub drive_stiffness: f64,
    pub drive_damping: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
}

/// One operator in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanModel {
    pub impedance: SubjectImpedance,
    pub t_grab: f64,
    pub grab_ramp: f64,
    pub reach_time: f64,
    /// Where the operator believes the surface is.
    pub x_target: f64,
    pub approach_gap: f64,
    pub creep_speed: f64,
    pub feed_rate: f64,
    pub stiffness_estimate: f64,
    pub reaction_delay: f64,
    pub stiffen_time: f64,
    pub retract_distance: f64,
    pub retract_time: f64,
    pub force_noise: f64,
}

impl HumanModel {
    /// Fraction of the grip established at time `t` (0 before the grab).
    pub fn grip(&self, t: f64) -> f64 {
        if t < self.t_grab {
            0.0
        } else {
            ((t - self.t_grab) / self.grab_ramp).min(1.0)
        }
    }

    /// Intended `(x, v)` while approaching: minimum-jerk reach to just short of
    /// the surface, then a slow creep until contact is felt.
    pub fn approach_intent(&self, t: f64) -> (f64, f64) {
        let tau = t - self.t_grab;
        let stop = self.x_target - self.approach_gap;
        if tau < self.reach_time {
            min_jerk(0.0, stop, self.reach_time, tau)
        } else {
            (stop + self.creep_speed * (tau - self.reach_time), self.creep_speed)
        }
    }

    /// Noise-free force while approaching the workpiece.
    pub fn approach_force(&self, t: f64, x: f64, v: f64) -> f64 {
        let g = self.grip(t);
        if g == 0.0 {
            return 0.0;
        }
        let (xd, vd) = self.approach_intent(t);
        let z = &self.impedance;
        g * (z.drive_stiffness * (xd - x) + z.drive_damping * (vd - v))
    }
}

/// Noise-free approach-phase operator force: `F_h = K_h (x_des − x) + B_h (v_des − v)`
/// after the grab, zero before.
pub fn human_force(h: &HumanModel, t: f64, x: f64, v: f64) -> f64 {
    h.approach_force(t, x, v)
}

/// What the operator is currently doing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HumanPhase {
    Approach,
    /// Contact felt at `t_contact`; the operator reacts after the reaction delay.
    Contact {
        t_contact: f64,
        feed: Option<FeedStart>,
    },
    Retract {
        t_retract: f64,
        x_start: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedStart {
    pub t_switch: f64,
    pub pen_switch: f64,
    /// Approach force at the switch; the push blends from it to the
    /// stiffness-based estimate so the operator does not let go on contact.
    pub hold_force: f64,
}

/// Phase machine of the operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumanState {
    pub phase: HumanPhase,
}

impl Default for HumanState {
    fn default() -> Self {
        Self {
            phase: HumanPhase::Approach,
        }
    }
}

impl HumanState {
    /// Noise-free operator force for the current phase.
    pub fn force(&self, h: &HumanModel, t: f64, x: f64, v: f64) -> f64 {
        let g = h.grip(t);
        if g == 0.0 {
            return 0.0;
        }
        let z = &h.impedance;
        match self.phase {
            HumanPhase::Approach | HumanPhase::Contact { feed: None, .. } => h.approach_force(t, x, v),
            HumanPhase::Contact {
                feed:
                    Some(FeedStart {
                        t_switch,
                        pen_switch,
                        hold_force,
                    }),
                ..
            } => {
                let s = ((t - t_switch) / h.stiffen_time).min(1.0);
                let pen_des = pen_switch + h.feed_rate * (t - t_switch);
                let k = z.drive_stiffness + (z.contact_stiffness - z.drive_stiffness) * s;
                let b = z.drive_damping + (z.contact_damping - z.drive_damping) * s;
                let push = (1.0 - s) * hold_force + s * h.stiffness_estimate * pen_des;
                g * (k * (h.x_target + pen_des - x) + b * (h.feed_rate - v) + push)
            }
            HumanPhase::Retract { t_retract, x_start } => {
                let tau = t - t_retract;
                let (xd, vd) = min_jerk(x_start, h.x_target - h.retract_distance, h.retract_time, tau);
                let fade = (1.0 - tau / 0.1).max(0.0);
                let push = h.stiffness_estimate * (x_start - h.x_target).max(0.0) * fade;
                g * (z.drive_stiffness * (xd - x) + z.drive_damping * (vd - v) + push)
            }
        }
    }

    /// Advance the phase machine after the sample at `t` with tool position `x`,
    /// velocity `v` and penetration `pen`.
    pub fn observe(&mut self, h: &HumanModel, t: f64, x: f64, v: f64, pen: f64, target_depth: f64) {
        match &mut self.phase {
            HumanPhase::Approach => {
                if pen > 0.0 {
                    self.phase = HumanPhase::Contact {
                        t_contact: t,
                        feed: None,
                    };
                }
            }
            HumanPhase::Contact { t_contact, feed } => match feed {
                None => {
                    if t >= *t_contact + h.reaction_delay - 1e-12 {
                        let g = h.grip(t);
                        *feed = Some(FeedStart {
                            t_switch: t,
                            pen_switch: pen,
                            hold_force: if g > 0.0 { h.approach_force(t, x, v) / g } else { 0.0 },
                        });
                    }
                }
                Some(_) => {
                    if pen >= target_depth {
                        self.phase = HumanPhase::Retract { t_retract: t, x_start: x };
                    }
                }
            },
            HumanPhase::Retract { .. } => {}
        }
    }

    pub fn retract_time(&self) -> Option<f64> {
        match self.phase {
            HumanPhase::Retract { t_retract, .. } => Some(t_retract),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> HumanModel {
        let cfg = HumanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let subj = SubjectImpedance {
            drive_stiffness: 300.0,
            drive_damping: 30.0,
            contact_stiffness: 400.0,
            contact_damping: 20.0,
        };
        cfg.sample_trial(subj, 0.3, 4000.0, &mut rng)
    }

    #[test]
    fn min_jerk_boundaries() {
        assert_eq!(min_jerk(0.1, 0.4, 2.0, 0.0), (0.1, 0.0));
        let (x, v) = min_jerk(0.1, 0.4, 2.0, 2.0);
        assert!((x - 0.4).abs() < 1e-15 && v.abs() < 1e-15);
        let (x, _) = min_jerk(0.1, 0.4, 2.0, 1.0);
        assert!((x - 0.25).abs() < 1e-15);
    }

    #[test]
    fn min_jerk_peak_velocity() {
        let (x0, x1, t) = (0.0, 0.3, 2.2);
        let peak = (0..=100_000)
            .map(|i| min_jerk(x0, x1, t, t * i as f64 / 100_000.0).1)
            .fold(f64::MIN, f64::max);
        assert!((peak - 1.875 * (x1 - x0) / t).abs() < 1e-9);
        assert!((min_jerk(x0, x1, t, t / 2.0).1 - peak).abs() < 1e-12);
    }

    #[test]
    fn no_force_before_grab() {
        let h = model();
        assert_eq!(human_force(&h, h.t_grab - 1e-6, -0.1, 0.3), 0.0);
        assert_eq!(HumanState::default().force(&h, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_tracking_gives_zero_force() {
        let h = model();
        for &t in &[h.t_grab + 0.5, h.t_grab + 1.0, h.t_grab + 3.0] {
            let (xd, vd) = h.approach_intent(t);
            assert!(human_force(&h, t, xd, vd).abs() < 1e-12);
        }
    }

    #[test]
    fn one_centimetre_lag_gives_three_newton() {
        let h = model();
        let t = h.t_grab + 1.0;
        let (xd, vd) = h.approach_intent(t);
        assert!((human_force(&h, t, xd - 0.01, vd) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn phase_machine_sequence() {
        let h = model();
        let mut s = HumanState::default();
        s.observe(&h, 4.0, 0.29, 0.01, 0.0, 0.005);
        assert_eq!(s.phase, HumanPhase::Approach);
        s.observe(&h, 4.002, 0.3001, 0.01, 0.0001, 0.005);
        assert!(matches!(s.phase, HumanPhase::Contact { feed: None, .. }));
        s.observe(&h, 4.102, 0.3005, 0.01, 0.0005, 0.005);
        assert!(matches!(s.phase, HumanPhase::Contact { feed: Some(_), .. }));
        s.observe(&h, 6.0, 0.305, 0.01, 0.005, 0.005);
        assert_eq!(s.retract_time(), Some(6.0));
    }

    #[test]
    fn subject_jitter_in_range() {
        let cfg = HumanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let s = cfg.sample_subject(&mut rng);
            assert!((240.0..=360.0).contains(&s.drive_stiffness));
            assert!((24.0..=36.0).contains(&s.drive_damping));
        }
    }
}
