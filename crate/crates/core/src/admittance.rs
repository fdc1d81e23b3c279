//! Integer- and fractional-order admittance controllers.
//!
//! Both map the measured interaction force to a reference velocity. The
//! integer-order law `1/(m s + b)` is discretized with backward Euler; the
//! fractional law `1/(m s^α + b)` replaces `s^α` with a truncated
//! Grünwald–Letnikov difference over the last `L` reference velocities and
//! solves the resulting implicit step in closed form. At `α = 1` the two
//! coincide.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, SAMPLE_PERIOD};

/// Default Grünwald–Letnikov memory length (4 s at 500 Hz).
pub const DEFAULT_MEMORY: usize = 2000;

/// Admittance triplet `(m, b, α)`.
///
/// `mass` is in kg·s^(α−1) (plain kg when `alpha == 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub mass: f64,
    pub damping: f64,
    pub alpha: f64,
}

impl ControllerParams {
    pub fn new(mass: f64, damping: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            mass,
            damping,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass must be > 0, got {}", self.mass)));
        }
        if !(self.damping > 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "damping must be > 0, got {}",
                self.damping
            )));
        }
        check_alpha(self.alpha)
    }

    pub fn is_integer_order(&self) -> bool {
        self.alpha == 1.0
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

/// Grünwald–Letnikov weights `w_0..=w_L` for the fractional difference of order `alpha`.
///
/// `w_0 = 1` and `w_k = w_{k-1} (1 - (alpha + 1) / k)`, i.e. `(-1)^k C(alpha, k)`.
pub fn gl_coefficients(alpha: f64, memory: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if memory < 1 {
        return Err(Error::InvalidParameter("memory length must be >= 1".into()));
    }
    let mut w = Vec::with_capacity(memory + 1);
    w.push(1.0);
    for k in 1..=memory {
        let prev = w[k - 1];
        w.push(prev * (1.0 - (alpha + 1.0) / k as f64));
    }
    Ok(w)
}

/// Fixed-length history of past reference velocities.
///
/// Stored twice over a `2L` buffer so the most recent `L` samples are always a
/// contiguous slice, oldest first.
#[derive(Debug, Clone)]
struct History {
    buf: Vec<f64>,
    head: usize,
    len: usize,
}

impl History {
    fn new(len: usize) -> Self {
        Self {
            buf: vec![0.0; 2 * len],
            head: len - 1,
            len,
        }
    }

    fn push(&mut self, v: f64) {
        self.head = (self.head + 1) % self.len;
        self.buf[self.head] = v;
        self.buf[self.head + self.len] = v;
    }

    /// Last `L` values, oldest first, newest last.
    fn window(&self) -> &[f64] {
        &self.buf[self.head + 1..self.head + 1 + self.len]
    }

    fn latest(&self) -> f64 {
        self.buf[self.head]
    }
}

/// Running state of one admittance controller.
#[derive(Debug, Clone)]
pub struct AdmittanceState {
    params: ControllerParams,
    sample_period: f64,
    memory: usize,
    weights: Vec<f64>,
    /// `weights[1..=L]` reversed, aligned with `History::window`.
    weights_rev: Vec<f64>,
    history: History,
}

impl AdmittanceState {
    pub fn new(params: ControllerParams) -> Result<Self> {
        Self::with_memory(params, DEFAULT_MEMORY, SAMPLE_PERIOD)
    }

    pub fn with_memory(params: ControllerParams, memory: usize, sample_period: f64) -> Result<Self> {
        params.validate()?;
        if !(sample_period > 0.0) {
            return Err(Error::InvalidParameter("sample period must be > 0".into()));
        }
        let weights = gl_coefficients(params.alpha, memory)?;
        let weights_rev = weights[1..].iter().rev().copied().collect();
        Ok(Self {
            params,
            sample_period,
            memory,
            weights,
            weights_rev,
            history: History::new(memory),
        })
    }

    pub fn params(&self) -> ControllerParams {
        self.params
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Most recent reference velocity.
    pub fn last_output(&self) -> f64 {
        self.history.latest()
    }

    /// Change `(m, b, α)` in place. Histories are kept so the output stays continuous.
    pub fn set_params(&mut self, new: ControllerParams) -> Result<()> {
        new.validate()?;
        if new.alpha != self.params.alpha {
            self.weights = gl_coefficients(new.alpha, self.memory)?;
            self.weights_rev.clear();
            self.weights_rev.extend(self.weights[1..].iter().rev());
        }
        self.params = new;
        Ok(())
    }

    /// Backward-Euler step of `1/(m s + b)`. Requires `alpha == 1`.
    pub fn ioac_step(&mut self, f_int: f64) -> Result<f64> {
        if !self.params.is_integer_order() {
            return Err(Error::InvalidParameter(format!(
                "integer-order step needs alpha = 1, have {}",
                self.params.alpha
            )));
        }
        Ok(self.backward_euler(f_int))
    }

    fn backward_euler(&mut self, f_int: f64) -> f64 {
        let ControllerParams { mass, damping, .. } = self.params;
        let ts = self.sample_period;
        let v = (mass * self.history.latest() + ts * f_int) / (mass + damping * ts);
        self.history.push(v);
        v
    }

    /// Truncated Grünwald–Letnikov step of `1/(m s^α + b)`.
    pub fn foac_step(&mut self, f_int: f64) -> f64 {
        let ControllerParams {
            mass,
            damping,
            alpha,
        } = self.params;
        let c = mass * self.sample_period.powf(-alpha);
        let past: f64 = self
            .history
            .window()
            .iter()
            .zip(&self.weights_rev)
            .map(|(v, w)| v * w)
            .sum();
        let v = (f_int - c * past) / (c * self.weights[0] + damping);
        self.history.push(v);
        v
    }

    /// Advance one sample with whichever law matches the current order.
    pub fn step(&mut self, f_int: f64) -> f64 {
        if self.params.is_integer_order() {
            self.backward_euler(f_int)
        } else {
            self.foac_step(f_int)
        }
    }
}
