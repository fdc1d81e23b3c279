//! Scenario configuration: every module's settings in one TOML document.
//!
//! Unknown keys are rejected at every level. A run resolves the document
//! (presets expanded, seeds propagated) and writes the result next to its
//! outputs so it can be replayed exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptationConfig;
use crate::classifier::TrainConfig;
use crate::metrics::PhaseLabels;
use crate::processor::ProcessorConfig;
use crate::sim::{CorpusSpec, EnvironmentModel, HumanConfig, LabelSource, LoopConfig, RobotSurrogate};
use crate::stability::GridSpec;
use crate::{Error, Result};

/// File name of the resolved configuration written next to outputs.
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// Which experiment layout a corpus follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusPreset {
    /// Position-scheduled controllers on plywood.
    Training,
    /// C1/C2/C3 on cardboard.
    #[default]
    Testing,
}

/// Corpus layout; unset fields come from the preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub preset: CorpusPreset,
    pub seed: u64,
    pub labels: LabelSource,
    pub n_subjects: Option<usize>,
    pub n_trials: Option<usize>,
    pub stiffness_jitter: Option<f64>,
    pub drill_jitter: Option<f64>,
    pub drill_freq_jitter: Option<f64>,
    pub x_w_min: Option<f64>,
    pub x_w_max: Option<f64>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            preset: CorpusPreset::Testing,
            seed: 1,
            labels: LabelSource::Truth,
            n_subjects: None,
            n_trials: None,
            stiffness_jitter: None,
            drill_jitter: None,
            drill_freq_jitter: None,
            x_w_min: None,
            x_w_max: None,
        }
    }
}

/// Settings of the condition comparison.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Label channel that delimits the Driving and Contact phases.
    pub phase_labels: PhaseLabels,
}

/// The whole scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Master seed; when set it overrides the corpus, training and stability seeds.
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub corpus: CorpusConfig,
    /// Replaces the preset workpiece when present.
    pub environment: Option<EnvironmentModel>,
    pub adaptation: AdaptationConfig,
    pub processor: ProcessorConfig,
    pub human: HumanConfig,
    pub robot: RobotSurrogate,
    #[serde(rename = "loop")]
    pub loop_cfg: LoopConfig,
    pub training: TrainConfig,
    pub metrics: MetricsConfig,
    pub stability: GridSpec,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Copy with presets expanded and the master seed pushed into every section.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(seed) = c.seed {
            c.corpus.seed = seed;
            c.training.seed = seed;
            c.stability.seed = seed;
        }
        let spec = c.corpus_spec();
        c.corpus.n_subjects = Some(spec.n_subjects);
        c.corpus.n_trials = Some(spec.n_trials);
        c.corpus.stiffness_jitter = Some(spec.stiffness_jitter);
        c.corpus.drill_jitter = Some(spec.drill_jitter);
        c.corpus.drill_freq_jitter = Some(spec.drill_freq_jitter);
        c.corpus.x_w_min = Some(spec.x_w_min);
        c.corpus.x_w_max = Some(spec.x_w_max);
        c.environment = Some(spec.env);
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.adaptation.validate()?;
        self.training.validate()?;
        self.stability.validate()?;
        self.corpus_spec().validate()
    }

    /// Corpus described by the `corpus` section and the module sections.
    pub fn corpus_spec(&self) -> CorpusSpec {
        let seed = self.seed.unwrap_or(self.corpus.seed);
        let mut spec = match self.corpus.preset {
            CorpusPreset::Training => CorpusSpec::training(seed),
            CorpusPreset::Testing => CorpusSpec::testing(seed, self.adaptation, self.corpus.labels),
        };
        let c = &self.corpus;
        spec.n_subjects = c.n_subjects.unwrap_or(spec.n_subjects);
        spec.n_trials = c.n_trials.unwrap_or(spec.n_trials);
        spec.stiffness_jitter = c.stiffness_jitter.unwrap_or(spec.stiffness_jitter);
        spec.drill_jitter = c.drill_jitter.unwrap_or(spec.drill_jitter);
        spec.drill_freq_jitter = c.drill_freq_jitter.unwrap_or(spec.drill_freq_jitter);
        spec.x_w_min = c.x_w_min.unwrap_or(spec.x_w_min);
        spec.x_w_max = c.x_w_max.unwrap_or(spec.x_w_max);
        if let Some(env) = self.environment {
            spec.env = env;
        }
        spec.labels = c.labels;
        spec.human = self.human;
        spec.robot = self.robot;
        spec.processor = self.processor;
        spec.loop_cfg = self.loop_cfg;
        spec
    }

    /// Write the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(RESOLVED_CONFIG_FILE);
        let text = self.resolved().to_toml_string()?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
