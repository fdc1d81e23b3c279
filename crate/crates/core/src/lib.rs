//! Discrete-time simulator and analysis toolkit for subtask-adaptive
//! admittance control in collaborative human-robot drilling.
//!
//! The crate is organised around the closed loop: an admittance controller
//! ([`admittance`]) turns interaction force into a reference velocity, the
//! [`adaptation`] policy retunes it from the current subtask, and the subtask
//! itself comes from a neural classifier ([`classifier`]) smoothed by the
//! [`processor`]. The [`sim`] module closes the loop around human, robot and
//! workpiece models; [`metrics`] and [`stability`] analyse the results, and
//! [`cli_io`] ties everything into file-based command pipelines.

pub mod adaptation;
pub mod admittance;
pub mod classifier;
pub mod cli_io;
pub mod config;
pub mod error;
pub mod metrics;
pub mod processor;
pub mod sim;
pub mod stability;
pub mod subtask;

pub use error::{Error, Result};
pub use subtask::Subtask;

/// Control loop sample period in seconds (500 Hz).
pub const SAMPLE_PERIOD: f64 = 0.002;
