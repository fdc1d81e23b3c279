//! Dataset assembly and the training loop.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::eval::ClassificationReport;
use super::features::{label_trial, window_at, FeatureStats, DRIVING_THRESHOLD, N_FEATURES, SEQ_LEN};
use super::mlp::MlpModel;
use super::network::{Adam, Network};
use super::{INPUT_DIM, N_CLASSES};
use crate::sim::TrialRecord;
use crate::{Error, Result, Subtask};

/// Training recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub l2: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Stop after this many epochs without a validation-accuracy improvement (0 disables).
    pub patience: usize,
    pub val_fraction: f64,
    /// Step between consecutive training windows, in samples.
    pub stride: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub driving_threshold: f64,
    /// Range of the random gain applied to the velocity channel of each
    /// training window (log-uniform; `[1, 1]` disables).
    pub velocity_gain: [f64; 2],
    /// Range of the random gain applied jointly to both force channels.
    pub force_gain: [f64; 2],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 0.001,
            dropout: 0.1,
            max_epochs: 80,
            batch_size: 128,
            patience: 12,
            val_fraction: 0.25,
            stride: 5,
            hidden_layers: 5,
            hidden_units: 75,
            driving_threshold: DRIVING_THRESHOLD,
            velocity_gain: [0.33, 5.0],
            force_gain: [0.15, 2.0],
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.l2 >= 0.0
            && (0.0..1.0).contains(&self.dropout)
            && self.max_epochs >= 1
            && self.batch_size >= 1
            && self.val_fraction > 0.0
            && self.val_fraction < 1.0
            && self.stride >= 1
            && self.hidden_units >= 1
            && self.driving_threshold >= 0.0
            && [self.velocity_gain, self.force_gain]
                .iter()
                .all(|&[lo, hi]| lo > 0.0 && lo <= hi && hi.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("invalid training configuration".into()))
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![INPUT_DIM];
        d.extend(std::iter::repeat_n(self.hidden_units, self.hidden_layers));
        d.push(N_CLASSES);
        d
    }

    /// SHA-256 (hex) of the canonical JSON form of this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plain struct serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Windows, labels and owning trial of every example.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<usize>,
    pub trial: Vec<usize>,
    /// Window lies entirely after the Driving onset.
    pub past_onset: Vec<bool>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for &y in &self.y {
            c[y] += 1;
        }
        c
    }
}

/// Ground-truth labels of a trial and the end (exclusive) of its labeled span,
/// which stops at the sample where the target depth is reached.
pub(crate) fn labeled_span(trial: &TrialRecord, threshold: f64) -> Result<(Vec<Subtask>, usize)> {
    let labels = label_trial(trial, threshold)?;
    let end = trial
        .depth_reached(trial.meta.target_depth)
        .map(|i| i + 1)
        .unwrap_or(trial.len());
    Ok((labels, end))
}

/// Windows every `stride` samples over the labeled span of each trial.
pub fn build_dataset(
    trials: &[&TrialRecord],
    stats: &FeatureStats,
    stride: usize,
    threshold: f64,
) -> Result<Dataset> {
    let mut spans = Vec::with_capacity(trials.len());
    let mut n = 0;
    for tr in trials {
        let (labels, end) = labeled_span(tr, threshold)?;
        n += end.div_ceil(stride);
        spans.push((labels, end));
    }
    let mut x = Array2::zeros((n, INPUT_DIM));
    let mut y = Vec::with_capacity(n);
    let mut owner = Vec::with_capacity(n);
    let mut past_onset = Vec::with_capacity(n);
    let mut row = 0;
    for (ti, (tr, (labels, end))) in trials.iter().zip(&spans).enumerate() {
        for i in (0..*end).step_by(stride) {
            let mut r = x.row_mut(row);
            window_at(&tr.samples, i, stats, r.as_slice_mut().expect("row-major"));
            y.push(labels[i].index());
            owner.push(ti);
            // labels never return to Idle, so the oldest sample decides
            past_onset.push(i + 1 >= SEQ_LEN && labels[i + 1 - SEQ_LEN] != Subtask::Idle);
            row += 1;
        }
    }
    debug_assert_eq!(row, n);
    Ok(Dataset {
        x,
        y,
        trial: owner,
        past_onset,
    })
}

/// Rescale the velocity channel and, jointly, the two force channels of
/// windows past the Driving onset by random gains from the configured ranges.
/// Joint force scaling keeps `F_h − F_int` (the workpiece reaction)
/// proportional to the applied force. Windows touching the Idle phase are left
/// alone: their label hinges on the absolute force threshold.
fn augment_gains(ds: &mut Dataset, stats: &FeatureStats, cfg: &TrainConfig) {
    if cfg.velocity_gain == [1.0, 1.0] && cfg.force_gain == [1.0, 1.0] {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut draw = |[lo, hi]: [f64; 2]| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo.ln()..=hi.ln()).exp()
        }
    };
    for (mut row, &past_onset) in ds.x.rows_mut().into_iter().zip(&ds.past_onset) {
        let gv = draw(cfg.velocity_gain);
        let gf = draw(cfg.force_gain);
        if !past_onset {
            continue;
        }
        let gains = [gv, gf, gf];
        for (j, z) in row.iter_mut().enumerate() {
            let f = j % N_FEATURES;
            let raw = *z * stats.std[f] + stats.mean[f];
            *z = (gains[f] * raw - stats.mean[f]) / stats.std[f];
        }
    }
}

/// Shuffle trial indices and cut them into training and validation sets.
pub fn split_by_trial(n_trials: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_trials).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n_trials as f64) * val_fraction).round() as usize;
    let n_val = n_val.clamp(1.min(n_trials), n_trials.saturating_sub(1));
    let val = idx.split_off(n_trials - n_val);
    (idx, val)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub validation: ClassificationReport,
    pub train_trials: Vec<usize>,
    pub val_trials: Vec<usize>,
    pub n_train_windows: usize,
    pub n_val_windows: usize,
}

impl TrainReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{other:?}")),
        })?;
        for e in &self.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn check_classes(ds: &Dataset, split: &'static str) -> Result<()> {
    for (c, &n) in ds.class_counts().iter().enumerate() {
        if n == 0 {
            return Err(Error::MissingClass(
                Subtask::from_index(c).expect("class index").id(),
                split,
            ));
        }
    }
    Ok(())
}

/// Train on a set of labeled trials with a trial-level train/validation split.
/// Returns the checkpoint with the best validation accuracy.
pub fn train(trials: &[TrialRecord], cfg: &TrainConfig) -> Result<(MlpModel, TrainReport)> {
    cfg.validate()?;
    if trials.len() < 2 {
        return Err(Error::Data(format!("need at least 2 trials to train, got {}", trials.len())));
    }
    let (train_ids, val_ids) = split_by_trial(trials.len(), cfg.val_fraction, cfg.seed);
    let train_set: Vec<&TrialRecord> = train_ids.iter().map(|&i| &trials[i]).collect();
    let val_set: Vec<&TrialRecord> = val_ids.iter().map(|&i| &trials[i]).collect();

    let mut fit_samples = Vec::new();
    for tr in &train_set {
        let (_, end) = labeled_span(tr, cfg.driving_threshold)?;
        fit_samples.extend_from_slice(&tr.samples[..end]);
    }
    let stats = FeatureStats::fit(&fit_samples)?;
    drop(fit_samples);

    let mut train_ds = build_dataset(&train_set, &stats, cfg.stride, cfg.driving_threshold)?;
    augment_gains(&mut train_ds, &stats, cfg);
    let val_ds = build_dataset(&val_set, &stats, cfg.stride, cfg.driving_threshold)?;
    check_classes(&train_ds, "training")?;
    check_classes(&val_ds, "validation")?;

    let (model, epochs, best_epoch) = fit(&train_ds, &val_ds, cfg, stats)?;
    let validation = {
        let net = Network::from_model(&model);
        let pred = predict_rows(&net, &val_ds.x);
        ClassificationReport::from_predictions(&val_ds.y, &pred)
    };
    let report = TrainReport {
        epochs,
        best_epoch,
        validation,
        train_trials: train_ids,
        val_trials: val_ids,
        n_train_windows: train_ds.len(),
        n_val_windows: val_ds.len(),
    };
    Ok((model, report))
}

/// Optimize a fresh network on prepared datasets.
pub(crate) fn fit(
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
    stats: FeatureStats,
) -> Result<(MlpModel, Vec<EpochStats>, usize)> {
    debug_assert_eq!(stats.mean.len() * SEQ_LEN, INPUT_DIM);
    debug_assert_eq!(stats.mean.len(), N_FEATURES);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut net = Network::glorot(&cfg.dims(), &mut rng);
    let mut adam = Adam::new(&net, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = train_ds.x.select(Axis(0), batch);
            let yb: Vec<usize> = batch.iter().map(|&i| train_ds.y[i]).collect();
            let (loss, g) = net.loss_and_gradients(xb.view(), &yb, cfg.l2, cfg.dropout, &mut rng);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut net, &g);
        }
        let (val_loss, val_acc) = validation_scores(&net, val_ds);
        epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_ds.len() as f64,
            val_loss,
            val_acc,
        });
        let improved = best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc);
        if improved {
            best = Some((val_acc, epoch, net.clone()));
        } else if cfg.patience > 0 && epoch - best.as_ref().expect("set on first epoch").1 >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, best_net) = best.expect("at least one epoch");
    Ok((best_net.to_model(stats, cfg.hash()), epochs, best_epoch))
}

const CHUNK: usize = 4096;

fn validation_scores(net: &Network, ds: &Dataset) -> (f64, f64) {
    let mut ce = 0.0;
    let mut correct = 0usize;
    for (start, chunk) in (0..ds.len()).step_by(CHUNK).zip(ds.x.axis_chunks_iter(Axis(0), CHUNK)) {
        let p = net.probabilities(chunk);
        for (r, row) in p.rows().into_iter().enumerate() {
            let y = ds.y[start + r];
            ce -= row[y].max(1e-300).ln();
            let pred = super::mlp::argmax(row.as_slice().expect("row-major"));
            correct += usize::from(pred == y);
        }
    }
    (ce / ds.len() as f64, 100.0 * correct as f64 / ds.len() as f64)
}

pub(crate) fn predict_rows(net: &Network, x: &Array2<f64>) -> Vec<usize> {
    let mut out = Vec::with_capacity(x.nrows());
    for chunk in x.axis_chunks_iter(Axis(0), CHUNK) {
        let p = net.probabilities(chunk);
        out.extend(
            p.rows()
                .into_iter()
                .map(|row| super::mlp::argmax(row.as_slice().expect("row-major"))),
        );
    }
    out
}
