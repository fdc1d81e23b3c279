//! Trained model: dense layers, feature statistics and persistence.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::FeatureStats;
use crate::{Error, Result, Subtask};

pub const MODEL_FORMAT: &str = "drillsim-mlp";
pub const MODEL_VERSION: u32 = 1;

/// Dense layer; `weights` is `n_in × n_out`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (x, row) in input.iter().zip(self.weights.chunks_exact(self.n_out)) {
            if *x != 0.0 {
                for (o, w) in out.iter_mut().zip(row) {
                    *o += x * w;
                }
            }
        }
    }
}

/// ReLU hidden layers followed by a softmax output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub format: String,
    pub version: u32,
    /// Layer widths, input first.
    pub dims: Vec<usize>,
    pub layers: Vec<Layer>,
    pub stats: FeatureStats,
    /// SHA-256 of the training configuration.
    pub config_hash: String,
}

impl MlpModel {
    /// All-zero model of the given widths with identity feature statistics.
    pub fn zeros(dims: &[usize], n_features: usize) -> Self {
        let layers = dims.windows(2).map(|d| Layer::zeros(d[0], d[1])).collect();
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            dims: dims.to_vec(),
            layers,
            stats: FeatureStats::identity(n_features),
            config_hash: String::new(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.dims.last().expect("at least one layer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Data(format!(
                "unsupported model format {} v{}",
                self.format, self.version
            )));
        }
        if self.dims.len() < 2 || self.layers.len() != self.dims.len() - 1 {
            return Err(Error::Data("model layer count does not match dims".into()));
        }
        for (l, d) in self.layers.iter().zip(self.dims.windows(2)) {
            if l.n_in != d[0] || l.n_out != d[1] {
                return Err(Error::DimensionMismatch {
                    expected: d[0] * d[1],
                    got: l.n_in * l.n_out,
                });
            }
            if l.weights.len() != l.n_in * l.n_out {
                return Err(Error::DimensionMismatch {
                    expected: l.n_in * l.n_out,
                    got: l.weights.len(),
                });
            }
            if l.bias.len() != l.n_out {
                return Err(Error::DimensionMismatch {
                    expected: l.n_out,
                    got: l.bias.len(),
                });
            }
        }
        let n_feat = self.stats.mean.len();
        if n_feat == 0 || self.stats.std.len() != n_feat || self.input_dim() % n_feat != 0 {
            return Err(Error::Data("feature statistics do not match the input width".into()));
        }
        Ok(())
    }

    /// Class probabilities for one already-normalized window.
    pub fn forward(&self, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: window.len(),
            });
        }
        let mut a = window.to_vec();
        let mut z = Vec::with_capacity(self.dims.iter().copied().max().unwrap_or(0));
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&a, &mut z);
            if i < last {
                for x in z.iter_mut() {
                    *x = x.max(0.0);
                }
            }
            std::mem::swap(&mut a, &mut z);
        }
        softmax(&mut a);
        Ok(a)
    }

    /// Most probable subtask for one already-normalized window.
    pub fn predict(&self, window: &[f64]) -> Result<Subtask> {
        let p = self.forward(window)?;
        Ok(Subtask::from_index(argmax(&p)).expect("three output classes"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: MlpModel = serde_json::from_str(&text)?;
        m.validate()?;
        Ok(m)
    }
}

/// In-place numerically stable softmax.
pub fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in z.iter_mut() {
        *x /= sum;
    }
}

pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}
