//! One closed-loop drilling trial.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::environment::{env_force, EnvironmentModel};
use super::human::{HumanModel, HumanState};
use super::record::{Sample, TrialMeta, TrialRecord};
use super::robot::{robot_step, RobotState, RobotSurrogate};
use crate::adaptation::{AdaptationConfig, AdaptationPolicy};
use crate::admittance::{AdmittanceState, ControllerParams};
use crate::classifier::{MlpModel, OnlineClassifier, DRIVING_THRESHOLD};
use crate::processor::{LabelCell, ProcessorConfig, SubtaskProcessor};
use crate::{Error, Result, Subtask, SAMPLE_PERIOD};

/// Loop-level settings shared by every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    /// Classifier update rate; the classifier runs on a phase accumulator
    /// against the 500 Hz control loop.
    pub classifier_rate_hz: f64,
    /// Control steps between a classification and its publication.
    pub publish_delay_steps: usize,
    pub timeout_s: f64,
    /// Trial continues this long after retraction begins.
    pub retract_hold_s: f64,
    /// Speed above which the trial is flagged unstable and stopped, m/s.
    pub max_speed: f64,
    /// Grünwald–Letnikov memory length, samples.
    pub gl_memory: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            classifier_rate_hz: 355.66,
            publish_delay_steps: 1,
            timeout_s: 30.0,
            retract_hold_s: 1.5,
            max_speed: 1.0,
            gl_memory: crate::admittance::DEFAULT_MEMORY,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.classifier_rate_hz > 0.0
            && self.classifier_rate_hz <= 1.0 / SAMPLE_PERIOD
            && self.timeout_s > 0.0
            && self.retract_hold_s >= 0.0
            && self.max_speed > 0.0
            && self.gl_memory >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("invalid loop configuration".into()))
        }
    }
}

/// Position-scheduled controllers used to record the training corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainingController {
    /// `m = 30, b = 2250` throughout.
    FixedIoac,
    /// `m = 69, b = 711`, `α` falling linearly with position from 1 to 0.85 at the surface.
    AdaptiveFoac,
    /// `(m, b)` moving linearly with position from `(69, 711)` to `(30, 2250)` at the surface.
    AdaptiveIoac,
}

impl TrainingController {
    pub const ALL: [TrainingController; 3] = [
        TrainingController::FixedIoac,
        TrainingController::AdaptiveFoac,
        TrainingController::AdaptiveIoac,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            TrainingController::FixedIoac => "fixed_ioac",
            TrainingController::AdaptiveFoac => "adaptive_foac",
            TrainingController::AdaptiveIoac => "adaptive_ioac",
        }
    }

    /// Parameters at tool position `x` for a surface at `x_w` (start at 0).
    pub fn params_at(self, x: f64, x_w: f64) -> ControllerParams {
        let s = (x / x_w).clamp(0.0, 1.0);
        match self {
            TrainingController::FixedIoac => ControllerParams {
                mass: 30.0,
                damping: 2250.0,
                alpha: 1.0,
            },
            TrainingController::AdaptiveFoac => ControllerParams {
                mass: 69.0,
                damping: 711.0,
                alpha: 1.0 - 0.15 * s,
            },
            TrainingController::AdaptiveIoac => ControllerParams {
                mass: 69.0 + (30.0 - 69.0) * s,
                damping: 711.0 + (2250.0 - 711.0) * s,
                alpha: 1.0,
            },
        }
    }
}

/// How the admittance parameters are chosen during a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    /// Subtask-driven policy (C1/C2/C3).
    Adaptive(AdaptationConfig),
    /// Position-scheduled training controller.
    Training(TrainingController),
    /// Constant parameters.
    Fixed(ControllerParams),
}

impl Controller {
    pub fn tag(&self) -> String {
        match self {
            Controller::Adaptive(c) => c.mode.tag().to_string(),
            Controller::Training(t) => t.tag().to_string(),
            Controller::Fixed(p) => format!("fixed_b{}_a{}", p.damping, p.alpha),
        }
    }
}

/// Where the raw subtask labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Ground-truth subtask from the simulator.
    Truth,
    /// The classifier running inside the loop.
    Classifier,
}

impl LabelSource {
    pub fn tag(self) -> &'static str {
        match self {
            LabelSource::Truth => "truth",
            LabelSource::Classifier => "classifier",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truth" => Ok(LabelSource::Truth),
            "classifier" => Ok(LabelSource::Classifier),
            other => Err(Error::InvalidParameter(format!("unknown label source {other:?}"))),
        }
    }
}

/// Raw label forced to `label` for `width` control steps starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSpike {
    pub start: usize,
    pub width: usize,
    pub label: Subtask,
}

/// Everything that defines one trial.
#[derive(Debug, Clone)]
pub struct TrialSpec {
    pub human: HumanModel,
    pub env: EnvironmentModel,
    pub controller: Controller,
    pub labels: LabelSource,
    pub processor: ProcessorConfig,
    pub robot: RobotSurrogate,
    pub loop_cfg: LoopConfig,
    /// Seed of the force-noise stream.
    pub noise_seed: u64,
    /// Injected raw-label disturbances (test hook).
    pub spikes: Vec<LabelSpike>,
    /// Copied into the record; flags and environment fields are filled in by the run.
    pub meta: TrialMeta,
}

enum ParamSource {
    Policy(AdaptationPolicy),
    Training(TrainingController, f64),
    Fixed(ControllerParams),
}

impl ParamSource {
    fn params(&mut self, label: Subtask, t: f64, x: f64) -> ControllerParams {
        match self {
            ParamSource::Policy(p) => p.update(label, t),
            ParamSource::Training(c, x_w) => c.params_at(x, *x_w),
            ParamSource::Fixed(p) => *p,
        }
    }
}

/// Phase-accumulator decimation of the classifier with delayed publication.
struct ClassifierBranch<'a> {
    net: OnlineClassifier<'a>,
    ratio: f64,
    phase: f64,
    /// In-flight results as `(publish_at_step, label)`.
    queue: std::collections::VecDeque<(usize, Subtask)>,
    delay: usize,
}

/// Run one trial at 500 Hz until retraction completes, the timeout expires or
/// the robot speed exceeds the instability limit.
pub fn run_trial(spec: &TrialSpec, model: Option<&MlpModel>) -> Result<TrialRecord> {
    spec.env.validate()?;
    spec.robot.validate()?;
    spec.loop_cfg.validate()?;
    let ts = SAMPLE_PERIOD;
    let h = &spec.human;
    let env = &spec.env;

    let mut source = match spec.controller {
        Controller::Adaptive(cfg) => ParamSource::Policy(AdaptationPolicy::new(cfg)?),
        Controller::Training(c) => ParamSource::Training(c, env.x_w),
        Controller::Fixed(p) => {
            p.validate()?;
            ParamSource::Fixed(p)
        }
    };
    let initial = source.params(Subtask::Idle, 0.0, 0.0);
    let mut ctrl = AdmittanceState::with_memory(initial, spec.loop_cfg.gl_memory, ts)?;
    let mut processor = SubtaskProcessor::new(&spec.processor)?;

    let mut branch = match spec.labels {
        LabelSource::Truth => None,
        LabelSource::Classifier => {
            let m = model.ok_or_else(|| {
                Error::InvalidParameter("classifier label source needs a model".into())
            })?;
            Some(ClassifierBranch {
                net: OnlineClassifier::new(m)?,
                ratio: spec.loop_cfg.classifier_rate_hz * ts,
                phase: 0.0,
                queue: Default::default(),
                delay: spec.loop_cfg.publish_delay_steps,
            })
        }
    };
    let published = LabelCell::new(Subtask::Idle);

    let noise = Normal::new(0.0, h.force_noise.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.noise_seed);

    let max_steps = (spec.loop_cfg.timeout_s / ts).round() as usize;
    let mut robot = RobotState::default();
    let mut human = HumanState::default();
    let mut truth = Subtask::Idle;
    let mut samples = Vec::with_capacity(max_steps.min(8192));
    let mut unstable = false;
    let mut finished = false;

    for k in 0..max_steps {
        let t = k as f64 * ts;
        let (x, v) = (robot.x, robot.v);

        let mut f_h = human.force(h, t, x, v);
        if h.grip(t) > 0.0 {
            f_h += noise.sample(&mut noise_rng);
        }
        let retracting = human.retract_time().is_some();
        let (f_env, pen) = env_force(env, x, v, !retracting, t);
        let f_int = f_h - f_env;

        truth = match truth {
            Subtask::Idle if pen > 0.0 => Subtask::Contact,
            Subtask::Idle if f_h.abs() > DRIVING_THRESHOLD => Subtask::Driving,
            Subtask::Driving if pen > 0.0 && !retracting => Subtask::Contact,
            Subtask::Contact if retracting && pen <= 0.0 => Subtask::Driving,
            other => other,
        };

        let mut sample = Sample {
            t,
            v,
            v_ref: 0.0,
            f_h,
            f_env,
            f_int,
            penetration: pen,
            subtask_true: truth.id(),
            subtask_raw: 0,
            subtask_voted: 0,
            subtask_processed: 0,
            b: 0.0,
            alpha: 0.0,
        };

        let mut raw = match branch.as_mut() {
            None => truth,
            Some(b) => {
                while b.queue.front().is_some_and(|&(due, _)| due <= k) {
                    let (_, label) = b.queue.pop_front().expect("checked");
                    published.publish(label);
                }
                b.net.push(&sample);
                b.phase += b.ratio;
                if b.phase >= 1.0 - 1e-12 {
                    b.phase -= 1.0;
                    let label = b.net.classify();
                    if b.delay == 0 {
                        published.publish(label);
                    } else {
                        b.queue.push_back((k + b.delay, label));
                    }
                }
                published.latest()
            }
        };
        if let Some(s) = spec.spikes.iter().find(|s| k >= s.start && k < s.start + s.width) {
            raw = s.label;
        }
        let labels = processor.step(raw, t)?;

        let params = source.params(labels.processed, t, x);
        ctrl.set_params(params)?;
        let v_ref = ctrl.step(f_int);
        if !v_ref.is_finite() {
            return Err(Error::Numeric(format!("reference velocity not finite at t = {t}")));
        }

        sample.v_ref = v_ref;
        sample.subtask_raw = raw.id();
        sample.subtask_voted = labels.voted.id();
        sample.subtask_processed = labels.processed.id();
        sample.b = params.damping;
        sample.alpha = params.alpha;
        samples.push(sample);

        human.observe(h, t, x, v, pen, env.target_depth);
        robot_step(&spec.robot, &mut robot, v_ref);

        if robot.v.abs() > spec.loop_cfg.max_speed || !robot.v.is_finite() {
            unstable = true;
            break;
        }
        if let Some(t_ret) = human.retract_time() {
            if t + 1e-9 >= t_ret + spec.loop_cfg.retract_hold_s {
                finished = true;
                break;
            }
        }
    }

    let mut meta = spec.meta.clone();
    meta.x_w = env.x_w;
    meta.stiffness = env.stiffness;
    meta.target_depth = env.target_depth;
    meta.label_source = spec.labels.tag().into();
    meta.condition = spec.controller.tag();
    meta.unstable = unstable;
    meta.timeout = !finished && !unstable;
    Ok(TrialRecord { meta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptation::ControllerMode;
    use crate::sim::human::{HumanConfig, SubjectImpedance};

    fn spec(controller: Controller, env: EnvironmentModel, seed: u64) -> TrialSpec {
        let cfg = HumanConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let subject = SubjectImpedance {
            drive_stiffness: 300.0,
            drive_damping: 30.0,
            contact_stiffness: 400.0,
            contact_damping: 20.0,
        };
        TrialSpec {
            human: cfg.sample_trial(subject, env.x_w, env.stiffness, &mut rng),
            env,
            controller,
            labels: LabelSource::Truth,
            processor: ProcessorConfig::default(),
            robot: RobotSurrogate::default(),
            loop_cfg: LoopConfig::default(),
            noise_seed: seed + 100,
            spikes: vec![],
            meta: TrialMeta::default(),
        }
    }

    fn adaptive(mode: ControllerMode) -> Controller {
        Controller::Adaptive(AdaptationConfig::with_mode(mode))
    }

    #[test]
    fn c1_keeps_damping_constant() {
        let r = run_trial(&spec(adaptive(ControllerMode::FixedIoac), EnvironmentModel::cardboard(), 1), None).unwrap();
        assert!(!r.meta.unstable && !r.meta.timeout);
        assert!(r.samples.iter().all(|s| s.b == 400.0 && s.alpha == 1.0));
        r.validate().unwrap();
    }

    #[test]
    fn c2_damping_follows_subtasks() {
        let r = run_trial(&spec(adaptive(ControllerMode::AdaptiveIoac), EnvironmentModel::cardboard(), 2), None).unwrap();
        assert!(!r.meta.unstable && !r.meta.timeout);
        assert_eq!(r.samples[0].b, 300.0);
        let drive = r.samples.iter().position(|s| s.subtask_true == 2).unwrap();
        let contact = r.samples.iter().position(|s| s.subtask_true == 3).unwrap();
        // settled at the Driving value before contact, then ramped to the Contact value
        assert_eq!(r.samples[contact - 1].b, 200.0);
        assert!(r.samples[drive..contact].iter().all(|s| s.b <= 300.0));
        let settle = contact + 16 + 100;
        assert_eq!(r.samples[settle].b, 400.0);
    }

    #[test]
    fn c3_reaches_low_alpha_in_contact() {
        let r = run_trial(&spec(adaptive(ControllerMode::AdaptiveFoac), EnvironmentModel::cardboard(), 3), None).unwrap();
        assert!(r.samples.iter().any(|s| s.subtask_true == 3 && s.alpha == 0.85));
        assert!(r.samples.iter().all(|s| (0.85..=1.0).contains(&s.alpha)));
    }

    #[test]
    fn identical_specs_give_identical_records() {
        let s = spec(adaptive(ControllerMode::AdaptiveFoac), EnvironmentModel::cardboard(), 4);
        assert_eq!(run_trial(&s, None).unwrap(), run_trial(&s, None).unwrap());
    }

    #[test]
    fn truth_labels_are_monotone_before_retraction() {
        let r = run_trial(&spec(adaptive(ControllerMode::AdaptiveIoac), EnvironmentModel::cardboard(), 5), None).unwrap();
        let end = r.depth_reached(0.005).unwrap();
        assert!(r.samples[..end].windows(2).all(|w| w[0].subtask_true <= w[1].subtask_true));
    }

    #[test]
    fn classifier_source_requires_model() {
        let mut s = spec(adaptive(ControllerMode::AdaptiveIoac), EnvironmentModel::cardboard(), 6);
        s.labels = LabelSource::Classifier;
        assert!(run_trial(&s, None).is_err());
    }

    #[test]
    fn training_schedule_endpoints() {
        let p = TrainingController::AdaptiveIoac.params_at(0.0, 0.3);
        assert_eq!((p.mass, p.damping, p.alpha), (69.0, 711.0, 1.0));
        let p = TrainingController::AdaptiveIoac.params_at(0.4, 0.3);
        assert_eq!((p.mass, p.damping), (30.0, 2250.0));
        let p = TrainingController::AdaptiveFoac.params_at(0.3, 0.3);
        assert!((p.alpha - 0.85).abs() < 1e-12);
    }
}
