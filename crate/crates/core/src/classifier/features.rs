//! Sliding feature windows, feature normalization and ground-truth labeling.

use serde::{Deserialize, Serialize};

use super::mlp::{argmax, MlpModel};
use super::INPUT_DIM;
use crate::sim::{Sample, TrialRecord};
use crate::{Error, Result, Subtask};

/// Samples per window.
pub const SEQ_LEN: usize = 60;
/// Channels per sample: velocity, interaction force, human force.
pub const N_FEATURES: usize = 3;
/// Human force (N) whose first crossing marks the Driving onset.
pub const DRIVING_THRESHOLD: f64 = 3.0;

fn features(s: &Sample) -> [f64; N_FEATURES] {
    [s.v, s.f_int, s.f_h]
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Mean and population standard deviation of each channel over the given samples.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = [0.0; N_FEATURES];
        let mut m2 = [0.0; N_FEATURES];
        for s in samples {
            n += 1;
            for (j, x) in features(s).into_iter().enumerate() {
                let d = x - mean[j];
                mean[j] += d / n as f64;
                m2[j] += d * (x - mean[j]);
            }
        }
        if n == 0 {
            return Err(Error::Data("cannot fit feature statistics on zero samples".into()));
        }
        let std = m2
            .iter()
            .map(|&s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            std,
        })
    }

    #[inline]
    fn apply(&self, raw: [f64; N_FEATURES], out: &mut [f64]) {
        for j in 0..N_FEATURES {
            out[j] = (raw[j] - self.mean[j]) / self.std[j];
        }
    }
}

/// Normalized window ending at sample `end` (inclusive), earliest sample first.
/// Positions before the trial start are zero-padded in raw units.
pub fn window_at(samples: &[Sample], end: usize, stats: &FeatureStats, out: &mut [f64]) {
    debug_assert_eq!(out.len(), INPUT_DIM);
    for k in 0..SEQ_LEN {
        let idx = end as isize - (SEQ_LEN - 1 - k) as isize;
        let raw = if idx >= 0 {
            features(&samples[idx as usize])
        } else {
            [0.0; N_FEATURES]
        };
        stats.apply(raw, &mut out[k * N_FEATURES..(k + 1) * N_FEATURES]);
    }
}

/// Ground-truth labels: Idle until `|F_h|` first exceeds `threshold`, Driving
/// until the first sample with positive penetration, Contact afterwards.
pub fn label_trial(trial: &TrialRecord, threshold: f64) -> Result<Vec<Subtask>> {
    let s = &trial.samples;
    let onset = s
        .iter()
        .position(|x| x.f_h.abs() > threshold)
        .ok_or(Error::NoDrivingOnset { threshold })?;
    let contact = s
        .iter()
        .position(|x| x.penetration > 0.0)
        .ok_or(Error::MissingContact)?;
    let contact = contact.max(onset);
    Ok((0..s.len())
        .map(|i| {
            if i < onset {
                Subtask::Idle
            } else if i < contact {
                Subtask::Driving
            } else {
                Subtask::Contact
            }
        })
        .collect())
}

/// Streaming classifier used inside the control loop.
#[derive(Debug, Clone)]
pub struct OnlineClassifier<'a> {
    model: &'a MlpModel,
    ring: Vec<[f64; N_FEATURES]>,
    head: usize,
    buf: Vec<f64>,
}

impl<'a> OnlineClassifier<'a> {
    pub fn new(model: &'a MlpModel) -> Result<Self> {
        model.validate()?;
        if model.input_dim() != INPUT_DIM {
            return Err(Error::DimensionMismatch {
                expected: INPUT_DIM,
                got: model.input_dim(),
            });
        }
        if model.stats.mean.len() != N_FEATURES {
            return Err(Error::DimensionMismatch {
                expected: N_FEATURES,
                got: model.stats.mean.len(),
            });
        }
        if model.n_classes() != super::N_CLASSES {
            return Err(Error::DimensionMismatch {
                expected: super::N_CLASSES,
                got: model.n_classes(),
            });
        }
        Ok(Self {
            model,
            ring: vec![[0.0; N_FEATURES]; SEQ_LEN],
            head: 0,
            buf: vec![0.0; INPUT_DIM],
        })
    }

    /// Append the newest sample.
    pub fn push(&mut self, s: &Sample) {
        self.ring[self.head] = features(s);
        self.head = (self.head + 1) % SEQ_LEN;
    }

    /// Classify the current window.
    pub fn classify(&mut self) -> Subtask {
        for k in 0..SEQ_LEN {
            let raw = self.ring[(self.head + k) % SEQ_LEN];
            self.model
                .stats
                .apply(raw, &mut self.buf[k * N_FEATURES..(k + 1) * N_FEATURES]);
        }
        let p = self.model.forward(&self.buf).expect("dimensions checked at construction");
        Subtask::from_index(argmax(&p)).expect("three classes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SAMPLE_PERIOD;

    fn trial(fh: impl Fn(usize) -> f64, pen: impl Fn(usize) -> f64, n: usize) -> TrialRecord {
        let samples = (0..n)
            .map(|i| Sample {
                t: i as f64 * SAMPLE_PERIOD,
                v: 0.0,
                v_ref: 0.0,
                f_h: fh(i),
                f_env: 0.0,
                f_int: fh(i),
                penetration: pen(i),
                subtask_true: 1,
                subtask_raw: 1,
                subtask_voted: 1,
                subtask_processed: 1,
                b: 400.0,
                alpha: 1.0,
            })
            .collect();
        TrialRecord {
            samples,
            ..Default::default()
        }
    }

    #[test]
    fn labels_follow_channels() {
        // F_h crosses 3 N at 1.8 s, penetration starts at 4.2 s
        let tr = trial(
            |i| if i >= 900 { 5.0 } else { 1.0 },
            |i| if i >= 2100 { 1e-4 } else { 0.0 },
            3000,
        );
        let l = label_trial(&tr, 3.0).unwrap();
        assert_eq!(l[899], Subtask::Idle);
        assert_eq!(l[900], Subtask::Driving);
        assert_eq!(l[2099], Subtask::Driving);
        assert_eq!(l[2100], Subtask::Contact);
        assert!(l.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_trial_has_no_onset() {
        let tr = trial(|_| 0.0, |_| 0.0, 100);
        assert!(matches!(label_trial(&tr, 3.0), Err(Error::NoDrivingOnset { .. })));
    }

    #[test]
    fn zero_threshold_uses_first_nonzero_force() {
        let tr = trial(|i| if i >= 7 { 0.01 } else { 0.0 }, |i| if i > 50 { 1e-3 } else { 0.0 }, 100);
        let l = label_trial(&tr, 0.0).unwrap();
        assert_eq!(l[6], Subtask::Idle);
        assert_eq!(l[7], Subtask::Driving);
    }

    #[test]
    fn window_is_zero_padded_and_ordered() {
        let tr = trial(|i| i as f64, |_| 0.0, 100);
        let stats = FeatureStats::identity(3);
        let mut w = vec![f64::NAN; INPUT_DIM];
        window_at(&tr.samples, 4, &stats, &mut w);
        // earliest first: the last five slots carry samples 0..=4
        for k in 0..55 {
            assert_eq!(&w[3 * k..3 * k + 3], &[0.0, 0.0, 0.0]);
        }
        for k in 0..5 {
            assert_eq!(w[3 * (55 + k) + 2], k as f64);
        }
    }

    #[test]
    fn online_matches_offline_window() {
        let tr = trial(|i| (i as f64 * 0.1).sin(), |_| 0.0, 300);
        let mut m = MlpModel::zeros(&[INPUT_DIM, 4, 3], 3);
        // a model that reads the last F_h sample
        m.layers[0].weights[(INPUT_DIM - 1) * 4] = 1.0;
        m.layers[1].weights[0] = 5.0;
        m.stats = FeatureStats {
            mean: vec![0.1, -0.2, 0.3],
            std: vec![2.0, 1.5, 0.5],
        };
        let mut online = OnlineClassifier::new(&m).unwrap();
        let mut w = vec![0.0; INPUT_DIM];
        for i in 0..tr.len() {
            online.push(&tr.samples[i]);
            window_at(&tr.samples, i, &m.stats, &mut w);
            assert_eq!(online.classify(), m.predict(&w).unwrap());
        }
    }
}
