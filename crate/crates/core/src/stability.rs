//! Simulation-based stability maps of the Contact phase.
//!
//! Each cell starts the tool preloaded in the workpiece with the operator
//! feeding at constant rate, kicks it with a short force pulse and compares
//! the velocity oscillation well after the pulse with the oscillation right
//! after it.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admittance::{AdmittanceState, ControllerParams, DEFAULT_MEMORY};
use crate::sim::{env_force, robot_step, EnvironmentModel, HumanConfig, RobotState, RobotSurrogate};
use crate::{Error, Result, SAMPLE_PERIOD};

/// Probe settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub duration_s: f64,
    pub pulse_time_s: f64,
    pub pulse_force: f64,
    pub pulse_width_s: f64,
    /// Initial penetration, m.
    pub preload: f64,
    /// Envelope ratio above which a cell is unstable.
    pub growth_threshold: f64,
    pub max_speed: f64,
    pub gl_memory: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            duration_s: 6.0,
            pulse_time_s: 1.0,
            pulse_force: 5.0,
            pulse_width_s: 0.05,
            preload: 0.0015,
            growth_threshold: 1.2,
            max_speed: 1.0,
            gl_memory: DEFAULT_MEMORY,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.pulse_time_s + 1.0 <= self.duration_s - 1.0
            && self.pulse_width_s > 0.0
            && self.growth_threshold > 0.0
            && self.max_speed > 0.0
            && self.preload >= 0.0
            && self.gl_memory >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "probe needs one second after the pulse and a final second that do not overlap".into(),
            ))
        }
    }
}

/// Result of one probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeResult {
    pub stable: bool,
    /// Oscillation envelope of the final second over that of the second after
    /// the pulse (`inf` if the speed limit was hit).
    pub growth: f64,
}

fn detrended_peak(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = v.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in v.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    v.iter()
        .enumerate()
        .map(|(i, &y)| (y - my - slope * (i as f64 - mx)).abs())
        .fold(0.0, f64::max)
}

/// Probe `params` against workpiece `env` and the operator's drilling impedance.
pub fn probe_stability(
    params: ControllerParams,
    env: &EnvironmentModel,
    human: &HumanConfig,
    robot: &RobotSurrogate,
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<ProbeResult> {
    cfg.validate()?;
    env.validate()?;
    let ts = SAMPLE_PERIOD;
    let mut ctrl = AdmittanceState::with_memory(params, cfg.gl_memory, ts)?;
    let noise = Normal::new(0.0, human.force_noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (cfg.duration_s / ts).round() as usize;
    let mut robot_state = RobotState::at(env.x_w + cfg.preload);
    let (kh, bh, feed) = (human.contact_stiffness, human.contact_damping, human.feed_rate);
    let mut vs = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * ts;
        let (x, v) = (robot_state.x, robot_state.v);
        let pen_des = cfg.preload + feed * t;
        let mut f_h = env.stiffness * pen_des + kh * (env.x_w + pen_des - x) + bh * (feed - v) + noise.sample(&mut rng);
        if t >= cfg.pulse_time_s && t < cfg.pulse_time_s + cfg.pulse_width_s {
            f_h += cfg.pulse_force;
        }
        let (f_env, _) = env_force(env, x, v, true, t);
        let v_ref = ctrl.step(f_h - f_env);
        robot_step(robot, &mut robot_state, v_ref);
        vs.push(v);
        if !robot_state.v.is_finite() || robot_state.v.abs() > cfg.max_speed {
            return Ok(ProbeResult {
                stable: false,
                growth: f64::INFINITY,
            });
        }
    }
    let idx = |t: f64| ((t / ts).round() as usize).min(n);
    let early = detrended_peak(&vs[idx(cfg.pulse_time_s)..idx(cfg.pulse_time_s + 1.0)]);
    let late = detrended_peak(&vs[idx(cfg.duration_s - 1.0)..]);
    let growth = if early > 0.0 { late / early } else { 0.0 };
    Ok(ProbeResult {
        stable: growth <= cfg.growth_threshold,
        growth,
    })
}

/// A named workpiece on the stiffness axis of the map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedEnvironment {
    pub name: String,
    pub model: EnvironmentModel,
}

/// Axes of a stability map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub b_min: f64,
    pub b_max: f64,
    pub b_step: f64,
    pub alphas: Vec<f64>,
    pub mass: f64,
    pub environments: Vec<NamedEnvironment>,
    pub seed: u64,
    pub probe: ProbeConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            b_min: 50.0,
            b_max: 800.0,
            b_step: 25.0,
            alphas: vec![0.85, 1.0],
            mass: 50.0,
            environments: vec![
                NamedEnvironment {
                    name: "cardboard".into(),
                    model: EnvironmentModel::cardboard(),
                },
                NamedEnvironment {
                    name: "plywood".into(),
                    model: EnvironmentModel::plywood(),
                },
            ],
            seed: 1,
            probe: ProbeConfig::default(),
        }
    }
}

impl GridSpec {
    pub fn dampings(&self) -> Vec<f64> {
        let n = ((self.b_max - self.b_min) / self.b_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.b_min + i as f64 * self.b_step).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_min > 0.0 && self.b_step > 0.0 && self.b_max >= self.b_min)
            || self.alphas.is_empty()
            || self.environments.is_empty()
            || !(self.mass > 0.0)
        {
            return Err(Error::InvalidParameter("stability grid is empty or malformed".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidParameter(format!("alpha {a} outside (0, 1]")));
            }
        }
        self.probe.validate()
    }
}

/// One map cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub b: f64,
    pub alpha: f64,
    #[serde(rename = "K_e")]
    pub k_e: f64,
    pub environment: String,
    pub stable: bool,
    pub growth: f64,
    /// Re-probed with three seeds during cleanup.
    pub reprobed: bool,
    /// Marked unstable to keep the stable set an up-set in `b`.
    pub forced: bool,
}

/// Verdicts over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityGrid {
    pub cells: Vec<Cell>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    b: f64,
    alpha: f64,
    #[serde(rename = "K_e")]
    k_e: f64,
    verdict: &'a str,
    growth: f64,
}

impl StabilityGrid {
    pub fn count_stable(&self, alpha: f64) -> usize {
        self.cells.iter().filter(|c| c.alpha == alpha && c.stable).count()
    }

    /// Smallest stable damping for `(alpha, environment)`.
    pub fn boundary(&self, alpha: f64, environment: &str) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.alpha == alpha && c.environment == environment && c.stable)
            .map(|c| c.b)
            .reduce(f64::min)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{other:?}")),
        })?;
        for c in &self.cells {
            w.serialize(CsvRow {
                b: c.b,
                alpha: c.alpha,
                k_e: c.k_e,
                verdict: if c.stable { "stable" } else { "unstable" },
                growth: c.growth,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// One text row per `(environment, alpha)`: `#` stable, `.` unstable.
    pub fn raster(&self) -> String {
        let mut out = String::new();
        let mut keys: Vec<(String, f64)> = Vec::new();
        for c in &self.cells {
            if !keys.iter().any(|(e, a)| *e == c.environment && *a == c.alpha) {
                keys.push((c.environment.clone(), c.alpha));
            }
        }
        for (env, alpha) in keys {
            let row: String = self
                .cells
                .iter()
                .filter(|c| c.environment == env && c.alpha == alpha)
                .map(|c| if c.stable { '#' } else { '.' })
                .collect();
            let _ = writeln!(out, "{env:>10} a={alpha:<5} {row}");
        }
        out
    }
}

fn cell_seed(base: u64, env: usize, alpha: usize, b: usize, rep: u64) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ ((env as u64) << 48)
        ^ ((alpha as u64) << 32)
        ^ ((b as u64) << 8)
        ^ rep
}

/// Probe every cell, then re-probe non-monotone cells with three seeds and
/// take the majority; whatever still breaks monotonicity is resolved toward
/// instability.
pub fn sweep_map(spec: &GridSpec, human: &HumanConfig, robot: &RobotSurrogate) -> Result<StabilityGrid> {
    spec.validate()?;
    let bs = spec.dampings();
    let nb = bs.len();
    let jobs: Vec<(usize, usize, usize)> = (0..spec.environments.len())
        .flat_map(|e| (0..spec.alphas.len()).flat_map(move |a| (0..nb).map(move |b| (e, a, b))))
        .collect();
    let probe = |e: usize, a: usize, b: usize, rep: u64| {
        let params = ControllerParams::new(spec.mass, bs[b], spec.alphas[a])?;
        probe_stability(
            params,
            &spec.environments[e].model,
            human,
            robot,
            &spec.probe,
            cell_seed(spec.seed, e, a, b, rep),
        )
    };
    let results = jobs
        .par_iter()
        .map(|&(e, a, b)| probe(e, a, b, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut cells: Vec<Cell> = jobs
        .iter()
        .zip(&results)
        .map(|(&(e, a, b), r)| Cell {
            b: bs[b],
            alpha: spec.alphas[a],
            k_e: spec.environments[e].model.stiffness,
            environment: spec.environments[e].name.clone(),
            stable: r.stable,
            growth: r.growth,
            reprobed: false,
            forced: false,
        })
        .collect();

    for line in 0..jobs.len() / nb {
        let start = line * nb;
        let (e, a, _) = jobs[start];
        let row = &mut cells[start..start + nb];
        let mut flagged = vec![false; nb];
        for i in 0..nb {
            for j in i + 1..nb {
                if row[i].stable && !row[j].stable {
                    flagged[i] = true;
                    flagged[j] = true;
                }
            }
        }
        for (i, cell) in row.iter_mut().enumerate() {
            if !flagged[i] {
                continue;
            }
            let votes = (1..=3)
                .map(|rep| probe(e, a, i, rep))
                .collect::<Result<Vec<_>>>()?;
            let stable_votes = votes.iter().filter(|r| r.stable).count();
            cell.stable = stable_votes >= 2;
            let mut g: Vec<f64> = votes.iter().map(|r| r.growth).collect();
            g.sort_by(f64::total_cmp);
            cell.growth = g[1];
            cell.reprobed = true;
        }
        // every cell below the highest unstable cell becomes unstable
        if let Some(last_unstable) = row.iter().rposition(|c| !c.stable) {
            for cell in &mut row[..last_unstable] {
                if cell.stable {
                    cell.stable = false;
                    cell.forced = true;
                }
            }
        }
    }
    Ok(StabilityGrid { cells })
}
