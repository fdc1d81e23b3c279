//! Batches of trials: subjects × conditions × repetitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::environment::EnvironmentModel;
use super::human::HumanConfig;
use super::record::{TrialMeta, TrialRecord};
use super::robot::RobotSurrogate;
use super::trial::{run_trial, Controller, LabelSource, LoopConfig, TrainingController, TrialSpec};
use crate::adaptation::{AdaptationConfig, ControllerMode};
use crate::classifier::MlpModel;
use crate::processor::ProcessorConfig;
use crate::{Error, Result};

/// Named workpiece presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvironmentKind {
    Cardboard,
    Plywood,
}

impl EnvironmentKind {
    pub fn model(self) -> EnvironmentModel {
        match self {
            EnvironmentKind::Cardboard => EnvironmentModel::cardboard(),
            EnvironmentKind::Plywood => EnvironmentModel::plywood(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvironmentKind::Cardboard => "cardboard",
            EnvironmentKind::Plywood => "plywood",
        }
    }
}

/// Everything needed to generate a corpus.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    /// Repetitions per condition.
    pub n_trials: usize,
    pub conditions: Vec<Controller>,
    pub environment: EnvironmentKind,
    /// Workpiece parameters; `x_w` is redrawn per trial.
    pub env: EnvironmentModel,
    /// Relative per-trial jitter of the workpiece stiffness.
    pub stiffness_jitter: f64,
    /// Relative per-trial jitter of the drill disturbance amplitude.
    pub drill_jitter: f64,
    /// Relative per-trial jitter of the drill disturbance frequency.
    pub drill_freq_jitter: f64,
    pub x_w_min: f64,
    pub x_w_max: f64,
    pub labels: LabelSource,
    pub seed: u64,
    pub human: HumanConfig,
    pub robot: RobotSurrogate,
    pub processor: ProcessorConfig,
    pub loop_cfg: LoopConfig,
}

impl CorpusSpec {
    /// Training experiments: 7 subjects × 3 position-scheduled controllers × 4
    /// repetitions on plywood, with varied stiffness and drill disturbance.
    pub fn training(seed: u64) -> Self {
        Self {
            n_subjects: 7,
            n_trials: 4,
            conditions: TrainingController::ALL.iter().map(|&c| Controller::Training(c)).collect(),
            environment: EnvironmentKind::Plywood,
            env: EnvironmentModel::plywood(),
            stiffness_jitter: 0.2,
            drill_jitter: 0.3,
            drill_freq_jitter: 0.0,
            x_w_min: 0.25,
            x_w_max: 0.35,
            labels: LabelSource::Truth,
            seed,
            human: HumanConfig::default(),
            robot: RobotSurrogate::default(),
            processor: ProcessorConfig::default(),
            loop_cfg: LoopConfig::default(),
        }
    }

    /// Testing experiments: 12 subjects × C1/C2/C3 × 4 repetitions on cardboard.
    pub fn testing(seed: u64, adaptation: AdaptationConfig, labels: LabelSource) -> Self {
        Self {
            n_subjects: 12,
            n_trials: 4,
            conditions: ControllerMode::ALL
                .iter()
                .map(|&mode| Controller::Adaptive(AdaptationConfig { mode, ..adaptation }))
                .collect(),
            environment: EnvironmentKind::Cardboard,
            env: EnvironmentModel::cardboard(),
            stiffness_jitter: 0.0,
            drill_jitter: 0.0,
            drill_freq_jitter: 0.0,
            x_w_min: 0.25,
            x_w_max: 0.35,
            labels,
            seed,
            human: HumanConfig::default(),
            robot: RobotSurrogate::default(),
            processor: ProcessorConfig::default(),
            loop_cfg: LoopConfig::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_subjects * self.n_trials * self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.n_trials == 0 || self.conditions.is_empty() {
            return Err(Error::InvalidParameter(
                "corpus needs at least one subject, trial and condition".into(),
            ));
        }
        if [self.stiffness_jitter, self.drill_jitter, self.drill_freq_jitter]
            .iter()
            .any(|j| !(0.0..1.0).contains(j))
        {
            return Err(Error::InvalidParameter("jitter must lie in [0, 1)".into()));
        }
        if !(self.x_w_min > self.human.approach_gap && self.x_w_min <= self.x_w_max) {
            return Err(Error::InvalidParameter("invalid workpiece position range".into()));
        }
        self.human.validate()?;
        self.robot.validate()?;
        self.processor.validate()?;
        self.loop_cfg.validate()?;
        self.env.validate()
    }

    /// Parameters of trial `(subject, condition, repetition)`, all zero-based.
    ///
    /// Random draws depend on the subject and repetition only, so every
    /// condition sees the same operator, workpiece and noise (paired design).
    pub fn trial_spec(&self, subject: usize, condition: usize, rep: usize) -> TrialSpec {
        let mut subj_rng = ChaCha8Rng::seed_from_u64(mix(self.seed, 1, subject as u64, 0));
        let impedance = self.human.sample_subject(&mut subj_rng);

        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, 2, subject as u64, rep as u64));
        let mut env = self.env;
        env.x_w = rng.random_range(self.x_w_min..=self.x_w_max);
        env.stiffness *= rng.random_range(1.0 - self.stiffness_jitter..=1.0 + self.stiffness_jitter);
        env.drill_amplitude *= rng.random_range(1.0 - self.drill_jitter..=1.0 + self.drill_jitter);
        env.drill_freq *= rng.random_range(1.0 - self.drill_freq_jitter..=1.0 + self.drill_freq_jitter);
        let human = self.human.sample_trial(impedance, env.x_w, env.stiffness, &mut rng);

        TrialSpec {
            human,
            env,
            controller: self.conditions[condition],
            labels: self.labels,
            processor: self.processor,
            robot: self.robot,
            loop_cfg: self.loop_cfg,
            noise_seed: mix(self.seed, 3, subject as u64, rep as u64),
            spikes: vec![],
            meta: TrialMeta {
                subject: subject + 1,
                repetition: rep + 1,
                environment: self.environment.name().into(),
                seed: self.seed,
                ..TrialMeta::default()
            },
        }
    }
}

/// Run every trial of the corpus, subject-major, then condition, then repetition.
pub fn generate_corpus(spec: &CorpusSpec, model: Option<&MlpModel>) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize, usize)> = (0..spec.n_subjects)
        .flat_map(|s| (0..spec.conditions.len()).flat_map(move |c| (0..spec.n_trials).map(move |r| (s, c, r))))
        .collect();
    jobs.par_iter()
        .map(|&(s, c, r)| run_trial(&spec.trial_spec(s, c, r), model))
        .collect()
}

/// File name of a trial inside a corpus directory.
pub fn trial_file_name(meta: &TrialMeta) -> String {
    format!("s{:02}_{}_r{}.csv", meta.subject, meta.condition, meta.repetition)
}

/// SplitMix64-style mixing of a seed with stream coordinates.
fn mix(seed: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut z = seed;
    for x in [tag, a, b] {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15 ^ x.wrapping_mul(0xd6e8_feb8_6659_fd93));
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}
