//! Per-trial performance metrics, passivity check and cross-condition comparison.

mod compare;
mod filter;
mod spectrum;

pub use compare::{compare_conditions, ConditionReport, ConditionRow, Metric, TrialMetrics};
pub use filter::{Biquad, Sos};
pub use spectrum::{Spectrum, PAD_FACTOR};

use serde::{Deserialize, Serialize};

use crate::sim::{Sample, TrialRecord};
use crate::{Error, Result, Subtask, SAMPLE_PERIOD};

/// Band of the contact-oscillation metric, Hz.
pub const OSC_BAND: (f64, f64) = (1.0, 20.0);
/// Band-pass prototype order (number of biquads).
pub const OSC_FILTER_ORDER: usize = 4;
/// Minimum Contact segment for the oscillation metric, s.
pub const MIN_CONTACT_S: f64 = 1.0;
/// Passivity tolerance of the exchanged-energy check, J.
pub const PASSIVITY_EPS: f64 = 1e-3;

/// Which label channel delimits the phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseLabels {
    /// Simulator ground truth.
    #[default]
    Truth,
    /// Processed classifier output.
    Processed,
}

impl std::str::FromStr for PhaseLabels {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "truth" => Ok(PhaseLabels::Truth),
            "processed" | "classifier" => Ok(PhaseLabels::Processed),
            other => Err(Error::InvalidParameter(format!("unknown label channel {other:?}"))),
        }
    }
}

fn label_of(s: &Sample, which: PhaseLabels) -> u8 {
    match which {
        PhaseLabels::Truth => s.subtask_true,
        PhaseLabels::Processed => s.subtask_processed,
    }
}

/// Sample indices of the Driving onset `t_d` and Contact onset `t_c`.
pub fn phase_indices(trial: &TrialRecord, which: PhaseLabels) -> Result<(usize, usize)> {
    let first = |l: Subtask| trial.samples.iter().position(|s| label_of(s, which) == l.id());
    let c = first(Subtask::Contact).ok_or(Error::MissingContact)?;
    let d = first(Subtask::Driving)
        .filter(|&d| d < c)
        .ok_or(Error::NoDrivingOnset {
            threshold: crate::classifier::DRIVING_THRESHOLD,
        })?;
    Ok((d, c))
}

/// Driving-phase averages and effort.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingMetrics {
    pub fh_ave: f64,
    pub v_ave: f64,
    pub eh_tot: f64,
    pub t_d: f64,
    pub t_c: f64,
}

fn trapezoid(y: impl Iterator<Item = f64>, dt: f64) -> f64 {
    let mut prev: Option<f64> = None;
    let mut acc = 0.0;
    for v in y {
        if let Some(p) = prev {
            acc += 0.5 * (p + v) * dt;
        }
        prev = Some(v);
    }
    acc
}

/// Average human force, average velocity and `∫|F_h v| dt` over `[t_d, t_c]`.
pub fn driving_metrics(trial: &TrialRecord, which: PhaseLabels) -> Result<DrivingMetrics> {
    let (d, c) = phase_indices(trial, which)?;
    let seg = &trial.samples[d..=c];
    let (t_d, t_c) = (seg[0].t, seg[seg.len() - 1].t);
    let span = t_c - t_d;
    if span <= 0.0 {
        return Err(Error::SegmentTooShort { got: seg.len(), need: 2 });
    }
    let dt = SAMPLE_PERIOD;
    Ok(DrivingMetrics {
        fh_ave: trapezoid(seg.iter().map(|s| s.f_h), dt) / span,
        v_ave: trapezoid(seg.iter().map(|s| s.v), dt) / span,
        eh_tot: trapezoid(seg.iter().map(|s| (s.f_h * s.v).abs()), dt),
        t_d,
        t_c,
    })
}

/// Peak of the single-sided amplitude spectrum in the 1–20 Hz band of a
/// velocity segment: mean removed, zero-phase band-passed, FFT.
pub fn oscillation_amplitude(v: &[f64]) -> Result<f64> {
    let need = (MIN_CONTACT_S / SAMPLE_PERIOD).round() as usize;
    if v.len() < need {
        return Err(Error::SegmentTooShort { got: v.len(), need });
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let detrended: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let fs = 1.0 / SAMPLE_PERIOD;
    let sos = Sos::butter_bandpass(OSC_FILTER_ORDER, OSC_BAND.0, OSC_BAND.1, fs)?;
    let y = sos.filtfilt(&detrended)?;
    Ok(Spectrum::compute(&y, fs).max_in_band(OSC_BAND.0, OSC_BAND.1))
}

/// Contact-phase velocity: from the Contact onset up to the sample where the
/// target depth is reached (or the last Contact sample if it never is).
pub fn contact_segment(trial: &TrialRecord, which: PhaseLabels) -> Result<&[Sample]> {
    let (_, c) = phase_indices(trial, which)?;
    let end = match trial.depth_reached(trial.meta.target_depth) {
        Some(i) if i > c => i,
        _ => {
            let stop = trial.samples[c..]
                .iter()
                .position(|s| label_of(s, which) != Subtask::Contact.id())
                .map_or(trial.len(), |k| c + k);
            stop
        }
    };
    Ok(&trial.samples[c..end])
}

/// `A_f^max` of a trial.
pub fn contact_oscillation(trial: &TrialRecord, which: PhaseLabels) -> Result<f64> {
    let seg = contact_segment(trial, which)?;
    let v: Vec<f64> = seg.iter().map(|s| s.v).collect();
    oscillation_amplitude(&v)
}

/// Cumulative human-to-robot energy and passivity verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    /// `E(t_k) = ∫₀^{t_k} F_h v dt` (trapezoid).
    pub series: Vec<f64>,
    pub min: f64,
    pub passive: bool,
}

pub fn exchanged_energy(trial: &TrialRecord) -> EnergyReport {
    let mut series = Vec::with_capacity(trial.len());
    let mut e = 0.0;
    let mut prev: Option<f64> = None;
    for s in &trial.samples {
        let p = s.f_h * s.v;
        if let Some(q) = prev {
            e += 0.5 * (p + q) * SAMPLE_PERIOD;
        }
        prev = Some(p);
        series.push(e);
    }
    let min = series.iter().copied().fold(0.0, f64::min);
    EnergyReport {
        series,
        min,
        passive: min >= -PASSIVITY_EPS,
    }
}
