//! Aggregation of trial metrics into per-condition means with 95% intervals.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{contact_oscillation, driving_metrics, PhaseLabels};
use crate::sim::TrialRecord;
use crate::{Error, Result};

/// Metric names accepted by [`compare_conditions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "Fh_ave")]
    FhAve,
    #[serde(rename = "v_ave")]
    VAve,
    #[serde(rename = "Eh_tot")]
    EhTot,
    #[serde(rename = "Af_max")]
    AfMax,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::FhAve, Metric::VAve, Metric::EhTot, Metric::AfMax];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FhAve => "Fh_ave",
            Metric::VAve => "v_ave",
            Metric::EhTot => "Eh_tot",
            Metric::AfMax => "Af_max",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric {s:?}")))
    }
}

/// All metrics of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub condition: String,
    pub subject: usize,
    pub repetition: usize,
    #[serde(rename = "Fh_ave")]
    pub fh_ave: f64,
    pub v_ave: f64,
    #[serde(rename = "Eh_tot")]
    pub eh_tot: f64,
    #[serde(rename = "Af_max")]
    pub af_max: f64,
    pub t_d: f64,
    pub t_c: f64,
}

impl TrialMetrics {
    pub fn compute(trial: &TrialRecord, which: PhaseLabels) -> Result<Self> {
        let d = driving_metrics(trial, which)?;
        let af_max = contact_oscillation(trial, which)?;
        Ok(Self {
            condition: trial.meta.condition.clone(),
            subject: trial.meta.subject,
            repetition: trial.meta.repetition,
            fh_ave: d.fh_ave,
            v_ave: d.v_ave,
            eh_tot: d.eh_tot,
            af_max,
            t_d: d.t_d,
            t_c: d.t_c,
        })
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::FhAve => self.fh_ave,
            Metric::VAve => self.v_ave,
            Metric::EhTot => self.eh_tot,
            Metric::AfMax => self.af_max,
        }
    }
}

/// One condition's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub condition: String,
    pub metric: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Percent change of the mean relative to C1 (NaN without a C1 row).
    #[serde(rename = "delta_vs_C1")]
    pub delta_vs_c1: f64,
    #[serde(skip)]
    pub subject_means: Vec<(usize, f64)>,
}

/// Per-condition summary of one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub metric: Metric,
    pub rows: Vec<ConditionRow>,
}

impl ConditionReport {
    pub fn row(&self, condition: &str) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.condition == condition)
    }

    /// Write several reports as one table.
    pub fn write_csv(reports: &[ConditionReport], path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{other:?}")),
        })?;
        for r in reports {
            for row in &r.rows {
                w.serialize(row)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn condition_order(c: &str) -> (u8, String) {
    match c {
        "C1" => (0, String::new()),
        "C2" => (1, String::new()),
        "C3" => (2, String::new()),
        other => (3, other.to_string()),
    }
}

/// Mean and two-sided 95% t-interval of subject means for every condition.
pub fn compare_conditions(metrics: &[TrialMetrics], metric: Metric) -> Result<ConditionReport> {
    let mut by_cond: BTreeMap<(u8, String), (String, BTreeMap<usize, Vec<f64>>)> = BTreeMap::new();
    for m in metrics {
        by_cond
            .entry(condition_order(&m.condition))
            .or_insert_with(|| (m.condition.clone(), BTreeMap::new()))
            .1
            .entry(m.subject)
            .or_default()
            .push(m.get(metric));
    }
    let mut rows = Vec::new();
    for (_, (condition, subjects)) in by_cond {
        if subjects.len() < 2 {
            return Err(Error::InsufficientSubjects {
                condition,
                got: subjects.len(),
                need: 2,
            });
        }
        let subject_means: Vec<(usize, f64)> = subjects
            .iter()
            .map(|(&s, v)| (s, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        let n = subject_means.len() as f64;
        let mean = subject_means.iter().map(|(_, m)| m).sum::<f64>() / n;
        let var = subject_means.iter().map(|(_, m)| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .inverse_cdf(0.975);
        let half = t * (var / n).sqrt();
        rows.push(ConditionRow {
            condition,
            metric: metric.name().into(),
            mean,
            ci_low: mean - half,
            ci_high: mean + half,
            delta_vs_c1: f64::NAN,
            subject_means,
        });
    }
    if let Some(base) = rows.iter().find(|r| r.condition == "C1").map(|r| r.mean) {
        for r in &mut rows {
            r.delta_vs_c1 = if base != 0.0 {
                100.0 * (r.mean / base - 1.0)
            } else {
                0.0
            };
        }
    }
    Ok(ConditionReport { metric, rows })
}
