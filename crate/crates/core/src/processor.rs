//! Post-processing of raw classifier labels: a majority-vote buffer followed
//! by a minimum-dwell latch, plus a latest-value cell for publishing the
//! processed label to the control loop.

use std::sync::atomic::{AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Subtask};

/// Buffer lengths and dwell time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProcessorConfig {
    pub voting_buffer_steps: usize,
    pub min_dwell_ms: f64,
}

impl Default for ProcessorConfig {
    fn default() -> Self {
        Self {
            voting_buffer_steps: 30,
            min_dwell_ms: 1000.0,
        }
    }
}

impl ProcessorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.voting_buffer_steps == 0 {
            return Err(Error::InvalidParameter("voting buffer needs at least one slot".into()));
        }
        if !(self.min_dwell_ms >= 0.0 && self.min_dwell_ms.is_finite()) {
            return Err(Error::InvalidParameter("min_dwell_ms must be >= 0".into()));
        }
        Ok(())
    }
}

/// Sliding window of the last `N` raw labels with incremental class counts.
#[derive(Debug, Clone)]
pub struct VotingBuffer {
    window: Vec<Subtask>,
    next: usize,
    counts: [usize; 3],
    verdict: Subtask,
}

impl VotingBuffer {
    /// Buffer of `len` slots pre-filled with Idle.
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "voting buffer length must be positive");
        let mut counts = [0; 3];
        counts[Subtask::Idle.index()] = len;
        Self {
            window: vec![Subtask::Idle; len],
            next: 0,
            counts,
            verdict: Subtask::Idle,
        }
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn verdict(&self) -> Subtask {
        self.verdict
    }

    /// Push `raw` and return the modal label of the window.
    ///
    /// A tie that includes the previous verdict keeps it; any other tie goes
    /// to the lowest subtask id.
    pub fn vote(&mut self, raw: Subtask) -> Subtask {
        let old = std::mem::replace(&mut self.window[self.next], raw);
        self.next = (self.next + 1) % self.window.len();
        self.counts[old.index()] -= 1;
        self.counts[raw.index()] += 1;

        let best = *self.counts.iter().max().expect("three classes");
        if self.counts[self.verdict.index()] != best {
            let idx = self.counts.iter().position(|&c| c == best).expect("max exists");
            self.verdict = Subtask::from_index(idx).expect("index < 3");
        }
        self.verdict
    }
}

/// Latch that holds each adopted label for at least `min_dwell` seconds.
#[derive(Debug, Clone)]
pub struct DwellState {
    current: Subtask,
    label_since: f64,
    min_dwell: f64,
    last_t: Option<f64>,
}

impl DwellState {
    /// Starts on Idle, adopted at `t = 0`.
    pub fn new(min_dwell: f64) -> Self {
        Self {
            current: Subtask::Idle,
            label_since: 0.0,
            min_dwell,
            last_t: None,
        }
    }

    pub fn current(&self) -> Subtask {
        self.current
    }

    pub fn label_since(&self) -> f64 {
        self.label_since
    }

    pub fn dwell(&mut self, verdict: Subtask, t: f64) -> Result<Subtask> {
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::TimeReversed { now: t, last });
            }
        }
        self.last_t = Some(t);
        // Tiny slack so a dwell of exactly `min_dwell` on the sample grid is not
        // lost to floating-point accumulation of the time stamps.
        if verdict != self.current && t - self.label_since >= self.min_dwell - 1e-9 {
            self.current = verdict;
            self.label_since = t;
        }
        Ok(self.current)
    }
}

/// Output of one processor step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProcessedLabels {
    pub voted: Subtask,
    pub processed: Subtask,
}

/// Voting buffer and dwell latch chained together.
#[derive(Debug, Clone)]
pub struct SubtaskProcessor {
    voting: VotingBuffer,
    dwell: DwellState,
}

impl SubtaskProcessor {
    pub fn new(config: &ProcessorConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            voting: VotingBuffer::new(config.voting_buffer_steps),
            dwell: DwellState::new(config.min_dwell_ms * 1e-3),
        })
    }

    pub fn step(&mut self, raw: Subtask, t: f64) -> Result<ProcessedLabels> {
        let voted = self.voting.vote(raw);
        let processed = self.dwell.dwell(voted, t)?;
        Ok(ProcessedLabels { voted, processed })
    }

    pub fn processed(&self) -> Subtask {
        self.dwell.current()
    }
}

/// Single-writer / single-reader cell holding the most recent label.
#[derive(Debug)]
pub struct LabelCell(AtomicU8);

impl LabelCell {
    pub fn new(initial: Subtask) -> Self {
        Self(AtomicU8::new(initial.id()))
    }

    pub fn publish(&self, label: Subtask) {
        self.0.store(label.id(), Ordering::Release);
    }

    pub fn latest(&self) -> Subtask {
        Subtask::from_id(self.0.load(Ordering::Acquire)).expect("cell only stores valid ids")
    }
}

impl Default for LabelCell {
    fn default() -> Self {
        Self::new(Subtask::Idle)
    }
}
