//! Classification scores, trial-level prediction and label-delay measurement.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{label_trial, window_at};
use super::mlp::MlpModel;
use super::network::Network;
use super::train::{labeled_span, predict_rows};
use super::{INPUT_DIM, N_CLASSES};
use crate::sim::TrialRecord;
use crate::{Result, Subtask, SAMPLE_PERIOD};

/// Accuracy, weighted F1 and confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub n: usize,
    /// Percent of samples classified correctly.
    pub accuracy: f64,
    /// Support-weighted mean of per-class F1, percent.
    pub weighted_f1: f64,
    /// `counts[true][predicted]`.
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
    /// Rows of `counts` normalized to percent.
    pub confusion: [[f64; N_CLASSES]; N_CLASSES],
}

impl ClassificationReport {
    pub fn from_predictions(truth: &[usize], pred: &[usize]) -> Self {
        let mut counts = [[0u64; N_CLASSES]; N_CLASSES];
        for (&t, &p) in truth.iter().zip(pred) {
            counts[t][p] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn from_counts(counts: [[u64; N_CLASSES]; N_CLASSES]) -> Self {
        let n: u64 = counts.iter().flatten().sum();
        let correct: u64 = (0..N_CLASSES).map(|c| counts[c][c]).sum();
        let mut confusion = [[0.0; N_CLASSES]; N_CLASSES];
        let mut weighted_f1 = 0.0;
        for c in 0..N_CLASSES {
            let support: u64 = counts[c].iter().sum();
            let predicted: u64 = (0..N_CLASSES).map(|r| counts[r][c]).sum();
            if support > 0 {
                for p in 0..N_CLASSES {
                    confusion[c][p] = 100.0 * counts[c][p] as f64 / support as f64;
                }
            }
            let tp = counts[c][c] as f64;
            let f1 = if support + predicted > 0 {
                2.0 * tp / (support + predicted) as f64
            } else {
                0.0
            };
            if n > 0 {
                weighted_f1 += f1 * support as f64 / n as f64;
            }
        }
        let pct = |x: f64| if n > 0 { 100.0 * x } else { 0.0 };
        Self {
            n: n as usize,
            accuracy: pct(correct as f64 / n.max(1) as f64),
            weighted_f1: pct(weighted_f1),
            counts,
            confusion,
        }
    }

    /// Largest off-diagonal cell of the row-normalized matrix as `(true, predicted)`.
    pub fn dominant_confusion(&self) -> (Subtask, Subtask) {
        let mut best = (0, 1);
        for t in 0..N_CLASSES {
            for p in 0..N_CLASSES {
                if t != p && self.confusion[t][p] > self.confusion[best.0][best.1] {
                    best = (t, p);
                }
            }
        }
        (
            Subtask::from_index(best.0).expect("class"),
            Subtask::from_index(best.1).expect("class"),
        )
    }

    /// Sum of per-class counts of another report into this one.
    pub fn merge(reports: &[ClassificationReport]) -> Self {
        let mut counts = [[0u64; N_CLASSES]; N_CLASSES];
        for r in reports {
            for t in 0..N_CLASSES {
                for p in 0..N_CLASSES {
                    counts[t][p] += r.counts[t][p];
                }
            }
        }
        Self::from_counts(counts)
    }
}

/// Per-sample predictions (stride 1) over the first `end` samples of a trial.
pub fn predict_trial(model: &MlpModel, trial: &TrialRecord, end: usize) -> Result<Vec<Subtask>> {
    model.validate()?;
    let net = Network::from_model(model);
    let mut out = Vec::with_capacity(end);
    const BLOCK: usize = 4096;
    let mut x = Array2::zeros((BLOCK.min(end.max(1)), INPUT_DIM));
    let mut start = 0;
    while start < end {
        let n = BLOCK.min(end - start);
        if x.nrows() != n {
            x = Array2::zeros((n, INPUT_DIM));
        }
        for r in 0..n {
            let mut row = x.row_mut(r);
            window_at(&trial.samples, start + r, &model.stats, row.as_slice_mut().expect("row-major"));
        }
        out.extend(
            predict_rows(&net, &x)
                .into_iter()
                .map(|c| Subtask::from_index(c).expect("class")),
        );
        start += n;
    }
    Ok(out)
}

/// Per-sample scores of `model` over the labeled span (start to target depth)
/// of every trial.
pub fn evaluate(model: &MlpModel, trials: &[TrialRecord], threshold: f64) -> Result<ClassificationReport> {
    let parts = trials
        .par_iter()
        .map(|tr| {
            let (labels, end) = labeled_span(tr, threshold)?;
            let pred = predict_trial(model, tr, end)?;
            let truth: Vec<usize> = labels[..end].iter().map(|l| l.index()).collect();
            let pred: Vec<usize> = pred.iter().map(|l| l.index()).collect();
            Ok(ClassificationReport::from_predictions(&truth, &pred))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationReport::merge(&parts))
}

/// Absolute delays (s) between the ground-truth Driving and Contact onsets and
/// the first processed label of the same subtask. A transition the processed
/// label never makes yields `f64::INFINITY`.
pub fn transition_delays(trial: &TrialRecord, threshold: f64) -> Result<[f64; 2]> {
    let truth = label_trial(trial, threshold)?;
    let processed = trial.processed_labels()?;
    let delay = |to: Subtask| {
        let t_true = truth.iter().position(|&l| l == to);
        let t_proc = processed.iter().position(|&l| l == to);
        match (t_true, t_proc) {
            (Some(a), Some(b)) => (b as f64 - a as f64).abs() * SAMPLE_PERIOD,
            _ => f64::INFINITY,
        }
    };
    Ok([delay(Subtask::Driving), delay(Subtask::Contact)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let y = vec![0, 1, 2, 2, 1, 0, 2];
        let r = ClassificationReport::from_predictions(&y, &y);
        assert_eq!(r.accuracy, 100.0);
        assert!((r.weighted_f1 - 100.0).abs() < 1e-12);
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(r.confusion[t][p], if t == p { 100.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let y: Vec<usize> = (0..300).map(|i| i % 3).collect();
        let r = ClassificationReport::from_predictions(&y, &vec![0; 300]);
        assert!((r.accuracy - 100.0 / 3.0).abs() < 1e-9);
        // F1 of the predicted class is 2·(1/3)/(1 + 1/3) = 0.5, weighted by 1/3
        assert!((r.weighted_f1 - 50.0 / 3.0).abs() < 1e-9);
        for row in r.confusion {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 0.01);
        }
    }

    #[test]
    fn dominant_confusion_cell() {
        let mut c = [[100, 0, 0], [2, 90, 8], [0, 3, 97]];
        let r = ClassificationReport::from_counts(c);
        assert_eq!(r.dominant_confusion(), (Subtask::Driving, Subtask::Contact));
        c[2][1] = 20;
        let r = ClassificationReport::from_counts(c);
        assert_eq!(r.dominant_confusion(), (Subtask::Contact, Subtask::Driving));
    }
}
