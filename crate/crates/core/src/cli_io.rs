//! Command pipelines behind the `drillsim` binary: corpus generation,
//! classifier training, single closed-loop runs, evaluation, condition
//! metrics and stability sweeps.
//!
//! Every command writes its outputs into one directory together with the
//! resolved configuration ([`crate::config::RESOLVED_CONFIG_FILE`]) so a run
//! can be replayed. Outputs depend only on the inputs and seeds, so reruns
//! are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{evaluate, train, transition_delays, ClassificationReport, MlpModel, TrainReport};
use crate::config::ScenarioConfig;
use crate::metrics::{compare_conditions, ConditionReport, Metric, TrialMetrics};
use crate::sim::{generate_corpus, run_trial, trial_file_name, Controller, LabelSource, TrialRecord};
use crate::stability::{sweep_map, StabilityGrid};
use crate::{Error, Result, Subtask};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MODEL_FILE: &str = "model.json";
pub const TRAIN_REPORT_FILE: &str = "training_report.csv";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const DELAYS_FILE: &str = "delays.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const STABILITY_FILE: &str = "stability.csv";
pub const STABILITY_RASTER_FILE: &str = "stability.txt";

/// One generated trial as listed in the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub subject: usize,
    pub condition: String,
    pub repetition: usize,
    pub label_source: String,
    pub environment: String,
    pub seed: u64,
    pub timeout: bool,
    pub unstable: bool,
    /// SHA-256 of the trial CSV.
    pub sha256: String,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    })
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn require_model(labels: LabelSource, model: Option<&MlpModel>) -> Result<()> {
    if labels == LabelSource::Classifier && model.is_none() {
        return Err(Error::InvalidParameter("classifier labels need a model".into()));
    }
    Ok(())
}

/// Simulate the configured corpus into `out_dir`: one CSV (plus `.meta`)
/// per trial, a manifest and the resolved configuration.
pub fn cmd_generate(cfg: &ScenarioConfig, out_dir: &Path, model: Option<&MlpModel>) -> Result<Vec<ManifestEntry>> {
    cfg.validate()?;
    let spec = cfg.corpus_spec();
    require_model(spec.labels, model)?;
    ensure_dir(out_dir)?;
    let trials = generate_corpus(&spec, model)?;
    let mut entries = Vec::with_capacity(trials.len());
    for tr in &trials {
        let name = trial_file_name(&tr.meta);
        let path = out_dir.join(&name);
        tr.write(&path)?;
        entries.push(ManifestEntry {
            file: name,
            subject: tr.meta.subject,
            condition: tr.meta.condition.clone(),
            repetition: tr.meta.repetition,
            label_source: tr.meta.label_source.clone(),
            environment: tr.meta.environment.clone(),
            seed: tr.meta.seed,
            timeout: tr.meta.timeout,
            unstable: tr.meta.unstable,
            sha256: file_sha256(&path)?,
        });
    }
    let mpath = out_dir.join(MANIFEST_FILE);
    let mut w = csv_writer(&mpath)?;
    for e in &entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(&mpath, e))?;
    cfg.write_resolved(out_dir)?;
    Ok(entries)
}

/// Trial CSV paths of a corpus directory: the manifest order when a manifest
/// exists, otherwise every `*.csv` that is not a known report, sorted by name.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", dir.display())));
    }
    let manifest = dir.join(MANIFEST_FILE);
    let files = if manifest.exists() {
        let mut r = csv::Reader::from_path(&manifest)?;
        r.deserialize::<ManifestEntry>()
            .map(|e| e.map(|e| dir.join(e.file)).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?
    } else {
        let reports = [
            MANIFEST_FILE,
            TRAIN_REPORT_FILE,
            EVALUATION_FILE,
            CONFUSION_FILE,
            DELAYS_FILE,
            METRICS_FILE,
            STABILITY_FILE,
        ];
        let mut files = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let is_csv = path.extension().is_some_and(|x| x == "csv");
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if is_csv && !reports.contains(&name) {
                files.push(path);
            }
        }
        files.sort();
        files
    };
    if files.is_empty() {
        return Err(Error::Data(format!("no trial files in {}", dir.display())));
    }
    Ok(files)
}

/// Read every trial of a corpus directory (see [`corpus_files`]).
pub fn load_corpus(dir: &Path) -> Result<Vec<TrialRecord>> {
    corpus_files(dir)?.iter().map(|p| TrialRecord::read(p)).collect()
}

/// Train the classifier on the corpus in `corpus_dir`; writes the model,
/// the per-epoch report and the resolved configuration into `out_dir`.
pub fn cmd_train(corpus_dir: &Path, cfg: &ScenarioConfig, out_dir: &Path) -> Result<(MlpModel, TrainReport)> {
    let cfg = cfg.resolved();
    cfg.training.validate()?;
    let trials = load_corpus(corpus_dir)?;
    let (model, report) = train(&trials, &cfg.training)?;
    ensure_dir(out_dir)?;
    model.save(&out_dir.join(MODEL_FILE))?;
    report.write_csv(&out_dir.join(TRAIN_REPORT_FILE))?;
    cfg.write_resolved(out_dir)?;
    Ok((model, report))
}

/// Run one closed-loop trial (subject and repetition zero-based) with the
/// configured adaptation mode and label source; writes the trial CSV and the
/// resolved configuration into `out_dir`.
///
/// A trial that exceeds the speed limit is still written; callers inspect
/// `meta.unstable`.
pub fn cmd_run(
    cfg: &ScenarioConfig,
    model: Option<&MlpModel>,
    subject: usize,
    repetition: usize,
    out_dir: &Path,
) -> Result<(TrialRecord, PathBuf)> {
    cfg.validate()?;
    let mut spec = cfg.corpus_spec();
    require_model(spec.labels, model)?;
    if subject >= spec.n_subjects || repetition >= spec.n_trials {
        return Err(Error::InvalidParameter(format!(
            "subject {subject} / repetition {repetition} outside the {}×{} corpus",
            spec.n_subjects, spec.n_trials
        )));
    }
    spec.conditions = vec![Controller::Adaptive(cfg.adaptation)];
    let record = run_trial(&spec.trial_spec(subject, 0, repetition), model)?;
    ensure_dir(out_dir)?;
    let path = out_dir.join(trial_file_name(&record.meta));
    record.write(&path)?;
    cfg.write_resolved(out_dir)?;
    Ok((record, path))
}

/// Classifier scores and processed-label delays over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSummary {
    pub report: ClassificationReport,
    /// Per trial: file name, Driving delay (s), Contact delay (s).
    pub delays: Vec<(String, [f64; 2])>,
}

impl EvaluationSummary {
    /// Mean over all trials of the Driving and Contact delays.
    pub fn mean_delay(&self) -> f64 {
        let n = 2 * self.delays.len();
        if n == 0 {
            return f64::NAN;
        }
        self.delays.iter().map(|(_, d)| d[0] + d[1]).sum::<f64>() / n as f64
    }

    fn mean_of(&self, k: usize) -> f64 {
        self.delays.iter().map(|(_, d)| d[k]).sum::<f64>() / self.delays.len().max(1) as f64
    }
}

/// Score `model` on the corpus in `corpus_dir` and measure processed-label
/// delays; writes the summary, confusion table and per-trial delays.
pub fn cmd_evaluate(
    model: &MlpModel,
    corpus_dir: &Path,
    cfg: &ScenarioConfig,
    out_dir: &Path,
) -> Result<EvaluationSummary> {
    let threshold = cfg.training.driving_threshold;
    let files = corpus_files(corpus_dir)?;
    let trials: Vec<TrialRecord> = files.iter().map(|p| TrialRecord::read(p)).collect::<Result<_>>()?;
    let report = evaluate(model, &trials, threshold)?;
    let delays = files
        .iter()
        .zip(&trials)
        .map(|(p, tr)| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, transition_delays(tr, threshold)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = EvaluationSummary { report, delays };

    ensure_dir(out_dir)?;
    let r = &summary.report;
    let (dt, dp) = r.dominant_confusion();
    let path = out_dir.join(EVALUATION_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["quantity", "value"])?;
    let rows = [
        ("samples", r.n.to_string()),
        ("accuracy", r.accuracy.to_string()),
        ("weighted_f1", r.weighted_f1.to_string()),
        ("dominant_confusion", format!("{dt}->{dp}")),
        ("mean_delay_driving_s", summary.mean_of(0).to_string()),
        ("mean_delay_contact_s", summary.mean_of(1).to_string()),
        ("mean_delay_s", summary.mean_delay().to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join(CONFUSION_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["true", "predicted", "count", "percent"])?;
    for t in Subtask::ALL {
        for p in Subtask::ALL {
            w.write_record([
                t.to_string(),
                p.to_string(),
                r.counts[t.index()][p.index()].to_string(),
                r.confusion[t.index()][p.index()].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = out_dir.join(DELAYS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["file", "delay_driving_s", "delay_contact_s"])?;
    for (name, d) in &summary.delays {
        w.write_record([name.clone(), d[0].to_string(), d[1].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    cfg.write_resolved(out_dir)?;
    Ok(summary)
}

/// Per-condition means and intervals of every metric over the corpus in
/// `corpus_dir`, written as one table.
pub fn cmd_metrics(corpus_dir: &Path, cfg: &ScenarioConfig, out_dir: &Path) -> Result<Vec<ConditionReport>> {
    let trials = load_corpus(corpus_dir)?;
    let which = cfg.metrics.phase_labels;
    let per_trial = trials
        .iter()
        .map(|tr| TrialMetrics::compute(tr, which))
        .collect::<Result<Vec<_>>>()?;
    let reports = Metric::ALL
        .iter()
        .map(|&m| compare_conditions(&per_trial, m))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(out_dir)?;
    ConditionReport::write_csv(&reports, &out_dir.join(METRICS_FILE))?;
    cfg.write_resolved(out_dir)?;
    Ok(reports)
}

/// Sweep the configured stability grid; writes the cell table and a text raster.
pub fn cmd_stability(cfg: &ScenarioConfig, out_dir: &Path) -> Result<StabilityGrid> {
    let cfg = cfg.resolved();
    let grid = sweep_map(&cfg.stability, &cfg.human, &cfg.robot)?;
    ensure_dir(out_dir)?;
    grid.write_csv(&out_dir.join(STABILITY_FILE))?;
    let raster = out_dir.join(STABILITY_RASTER_FILE);
    fs::write(&raster, grid.raster()).map_err(|e| Error::io(&raster, e))?;
    cfg.write_resolved(out_dir)?;
    Ok(grid)
}

