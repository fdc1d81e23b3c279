//! Recorded trials and their on-disk form (CSV plus a key=value sidecar).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Subtask, SAMPLE_PERIOD};

/// Column header of a trial CSV, in order.
pub const TRIAL_HEADER: [&str; 13] = [
    "t",
    "v",
    "v_ref",
    "F_h",
    "F_env",
    "F_int",
    "penetration",
    "subtask_true",
    "subtask_raw",
    "subtask_voted",
    "subtask_processed",
    "b",
    "alpha",
];

/// One sample of every recorded channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub v: f64,
    pub v_ref: f64,
    #[serde(rename = "F_h")]
    pub f_h: f64,
    #[serde(rename = "F_env")]
    pub f_env: f64,
    #[serde(rename = "F_int")]
    pub f_int: f64,
    pub penetration: f64,
    pub subtask_true: u8,
    pub subtask_raw: u8,
    pub subtask_voted: u8,
    pub subtask_processed: u8,
    pub b: f64,
    pub alpha: f64,
}

/// Descriptive fields stored next to a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMeta {
    pub subject: usize,
    pub repetition: usize,
    /// Controller condition tag, e.g. `C2` or `adaptive_foac`.
    pub condition: String,
    /// `truth`, `classifier` or `none`.
    pub label_source: String,
    pub environment: String,
    pub seed: u64,
    pub x_w: f64,
    pub stiffness: f64,
    /// Penetration at which drilling stops, m.
    pub target_depth: f64,
    pub timeout: bool,
    pub unstable: bool,
}

impl Default for TrialMeta {
    fn default() -> Self {
        Self {
            subject: 0,
            repetition: 0,
            condition: String::new(),
            label_source: String::new(),
            environment: String::new(),
            seed: 0,
            x_w: 0.0,
            stiffness: 0.0,
            target_depth: 0.005,
            timeout: false,
            unstable: false,
        }
    }
}

impl TrialMeta {
    fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "subject={}", self.subject);
        let _ = writeln!(s, "repetition={}", self.repetition);
        let _ = writeln!(s, "condition={}", self.condition);
        let _ = writeln!(s, "label_source={}", self.label_source);
        let _ = writeln!(s, "environment={}", self.environment);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "x_w={}", self.x_w);
        let _ = writeln!(s, "stiffness={}", self.stiffness);
        let _ = writeln!(s, "target_depth={}", self.target_depth);
        let _ = writeln!(s, "timeout={}", self.timeout);
        let _ = writeln!(s, "unstable={}", self.unstable);
        let _ = writeln!(s, "sample_period={}", SAMPLE_PERIOD);
        s
    }

    fn from_kv(text: &str) -> Result<Self> {
        let mut m = TrialMeta::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("metadata line {}: expected key=value", lineno + 1)))?;
            let bad = |what: &str| Error::Data(format!("metadata {k}: bad {what} {v:?}"));
            match k.trim() {
                "subject" => m.subject = v.parse().map_err(|_| bad("integer"))?,
                "repetition" => m.repetition = v.parse().map_err(|_| bad("integer"))?,
                "condition" => m.condition = v.to_string(),
                "label_source" => m.label_source = v.to_string(),
                "environment" => m.environment = v.to_string(),
                "seed" => m.seed = v.parse().map_err(|_| bad("integer"))?,
                "x_w" => m.x_w = v.parse().map_err(|_| bad("number"))?,
                "stiffness" => m.stiffness = v.parse().map_err(|_| bad("number"))?,
                "target_depth" => m.target_depth = v.parse().map_err(|_| bad("number"))?,
                "timeout" => m.timeout = v.parse().map_err(|_| bad("flag"))?,
                "unstable" => m.unstable = v.parse().map_err(|_| bad("flag"))?,
                "sample_period" => {
                    let ts: f64 = v.parse().map_err(|_| bad("number"))?;
                    if ts != SAMPLE_PERIOD {
                        return Err(Error::Data(format!("unsupported sample period {ts}")));
                    }
                }
                other => return Err(Error::Data(format!("unknown metadata key {other:?}"))),
            }
        }
        Ok(m)
    }
}

/// Time series of one trial, one entry per control step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialRecord {
    pub meta: TrialMeta,
    pub samples: Vec<Sample>,
}

impl TrialRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn column(&self, f: impl Fn(&Sample) -> f64) -> Vec<f64> {
        self.samples.iter().map(f).collect()
    }

    pub fn true_labels(&self) -> Result<Vec<Subtask>> {
        self.samples.iter().map(|s| label(s.subtask_true)).collect()
    }

    pub fn processed_labels(&self) -> Result<Vec<Subtask>> {
        self.samples.iter().map(|s| label(s.subtask_processed)).collect()
    }

    /// First sample index where the penetration reaches `depth`.
    pub fn depth_reached(&self, depth: f64) -> Option<usize> {
        self.samples.iter().position(|s| s.penetration >= depth)
    }

    /// Check `F_int = F_h − F_env`, label ids and time stamps.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            let scale = 1.0 + s.f_h.abs() + s.f_env.abs();
            if (s.f_int - (s.f_h - s.f_env)).abs() > 1e-9 * scale {
                return Err(Error::Data(format!("row {i}: F_int != F_h - F_env")));
            }
            for id in [s.subtask_true, s.subtask_raw, s.subtask_voted, s.subtask_processed] {
                label(id)?;
            }
            let expect = i as f64 * SAMPLE_PERIOD;
            if (s.t - expect).abs() > 1e-6 {
                return Err(Error::Data(format!("row {i}: time stamp {} off the sample grid", s.t)));
            }
        }
        Ok(())
    }

    /// Write `<path>` (CSV) and `<path>.meta` next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| wrap_csv(path, e))?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        if self.samples.is_empty() {
            w.write_record(TRIAL_HEADER)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        fs::write(meta_path(path), self.meta.to_kv()).map_err(|e| Error::io(meta_path(path), e))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| wrap_csv(path, e))?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != TRIAL_HEADER {
            return Err(Error::Data(format!("{}: unexpected header {:?}", path.display(), header)));
        }
        let samples = r.deserialize().collect::<std::result::Result<Vec<Sample>, _>>()?;
        let mp = meta_path(path);
        let meta = match fs::read_to_string(&mp) {
            Ok(text) => TrialMeta::from_kv(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => TrialMeta::default(),
            Err(e) => return Err(Error::io(mp, e)),
        };
        let rec = TrialRecord { meta, samples };
        rec.validate()?;
        Ok(rec)
    }
}

fn label(id: u8) -> Result<Subtask> {
    Subtask::from_id(id).ok_or_else(|| Error::Data(format!("bad subtask id {id}")))
}

fn wrap_csv(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

/// Sidecar path: `trial.csv` → `trial.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}
