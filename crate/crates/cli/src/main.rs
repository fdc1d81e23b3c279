//! `drillsim` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric error or unstable closed loop.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drillsim::adaptation::ControllerMode;
use drillsim::classifier::MlpModel;
use drillsim::cli_io;
use drillsim::config::{CorpusPreset, ScenarioConfig};
use drillsim::metrics::PhaseLabels;
use drillsim::sim::LabelSource;
use drillsim::Error;

#[derive(Parser)]
#[command(name = "drillsim", version, about = "Subtask-adaptive admittance control simulator")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Scenario configuration (TOML); unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: `out_dir` from the configuration, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    C1,
    C2,
    C3,
}

#[derive(Clone, Copy, ValueEnum)]
enum Labels {
    Truth,
    Classifier,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Training,
    Testing,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a corpus of trials and write it with a manifest.
    Generate {
        /// Experiment layout (default: from the configuration).
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Source of the raw labels driving the adaptation.
        #[arg(long, value_enum)]
        labels: Option<Labels>,
        /// Classifier model, required with `--labels classifier`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the subtask classifier on a corpus directory.
    Train {
        /// Directory of trial CSV files (plywood training corpus).
        corpus: PathBuf,
    },
    /// Run one closed-loop trial.
    Run {
        /// Controller condition (default: from the configuration).
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Source of the raw labels driving the adaptation.
        #[arg(long, value_enum)]
        labels: Option<Labels>,
        /// Classifier model, required with `--labels classifier`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Zero-based subject index.
        #[arg(long, default_value_t = 0)]
        subject: usize,
        /// Zero-based repetition index.
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Score a classifier on a corpus and measure label delays.
    Evaluate {
        /// Trained classifier model.
        #[arg(long)]
        model: PathBuf,
        /// Directory of trial CSV files to score.
        corpus: PathBuf,
    },
    /// Compare controller conditions over a corpus.
    Metrics {
        /// Directory of trial CSV files with C1/C2/C3 trials.
        corpus: PathBuf,
        /// Label channel delimiting the phases (`classifier` = processed labels).
        #[arg(long, value_enum)]
        labels: Option<Labels>,
    },
    /// Sweep the damping / fractional-order stability map.
    Stability,
}

impl From<Mode> for ControllerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::C1 => ControllerMode::FixedIoac,
            Mode::C2 => ControllerMode::AdaptiveIoac,
            Mode::C3 => ControllerMode::AdaptiveFoac,
        }
    }
}

impl From<Labels> for LabelSource {
    fn from(l: Labels) -> Self {
        match l {
            Labels::Truth => LabelSource::Truth,
            Labels::Classifier => LabelSource::Classifier,
        }
    }
}

impl From<Labels> for PhaseLabels {
    fn from(l: Labels) -> Self {
        match l {
            Labels::Truth => PhaseLabels::Truth,
            Labels::Classifier => PhaseLabels::Processed,
        }
    }
}

impl From<Preset> for CorpusPreset {
    fn from(p: Preset) -> Self {
        match p {
            Preset::Training => CorpusPreset::Training,
            Preset::Testing => CorpusPreset::Testing,
        }
    }
}

/// Failure of a command, carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::InvalidParameter(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn unstable(what: String) -> Failure {
    Failure {
        code: 3,
        message: what,
    }
}

fn load_model(path: &Path) -> Result<MlpModel, Failure> {
    Ok(MlpModel::load(path)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.global.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.global.seed {
        cfg.seed = Some(seed);
    }
    let out = cli
        .global
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match cli.command {
        Command::Generate { preset, labels, model } => {
            if let Some(p) = preset {
                cfg.corpus.preset = p.into();
            }
            if let Some(l) = labels {
                cfg.corpus.labels = l.into();
            }
            let model = model.as_deref().map(load_model).transpose()?;
            let entries = cli_io::cmd_generate(&cfg, &out, model.as_ref())?;
            println!("wrote {} trials to {}", entries.len(), out.display());
            let bad: Vec<_> = entries.iter().filter(|e| e.unstable).map(|e| e.file.as_str()).collect();
            if !bad.is_empty() {
                return Err(unstable(format!("unstable trials: {}", bad.join(", "))));
            }
        }
        Command::Train { corpus } => {
            let (_, report) = cli_io::cmd_train(&corpus, &cfg, &out)?;
            println!(
                "trained {} epochs (best {}), model in {}",
                report.epochs.len(),
                report.best_epoch,
                out.join(cli_io::MODEL_FILE).display()
            );
        }
        Command::Run {
            mode,
            labels,
            model,
            subject,
            repetition,
        } => {
            if let Some(m) = mode {
                cfg.adaptation.mode = m.into();
            }
            if let Some(l) = labels {
                cfg.corpus.labels = l.into();
            }
            let model = model.as_deref().map(load_model).transpose()?;
            let (record, path) = cli_io::cmd_run(&cfg, model.as_ref(), subject, repetition, &out)?;
            println!("wrote {} ({} samples)", path.display(), record.len());
            if record.meta.unstable {
                return Err(unstable(format!("closed loop went unstable in {}", path.display())));
            }
        }
        Command::Evaluate { model, corpus } => {
            let model = load_model(&model)?;
            let s = cli_io::cmd_evaluate(&model, &corpus, &cfg, &out)?;
            let (t, p) = s.report.dominant_confusion();
            println!(
                "accuracy {:.2}%  weighted F1 {:.2}%  dominant confusion {t}->{p}  mean delay {:.0} ms",
                s.report.accuracy,
                s.report.weighted_f1,
                1e3 * s.mean_delay()
            );
        }
        Command::Metrics { corpus, labels } => {
            if let Some(l) = labels {
                cfg.metrics.phase_labels = l.into();
            }
            let reports = cli_io::cmd_metrics(&corpus, &cfg, &out)?;
            for r in &reports {
                for row in &r.rows {
                    println!(
                        "{:<3} {:<7} {:>12.6} [{:.6}, {:.6}] {:+.1}%",
                        row.condition, row.metric, row.mean, row.ci_low, row.ci_high, row.delta_vs_c1
                    );
                }
            }
        }
        Command::Stability => {
            let grid = cli_io::cmd_stability(&cfg, &out)?;
            print!("{}", grid.raster());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
