//! Closed-loop simulation of collaborative drilling: operator, workpiece,
//! robot surrogate, admittance controller and the subtask pipeline.

mod corpus;
mod environment;
mod human;
mod record;
mod robot;
mod trial;

pub use corpus::{generate_corpus, trial_file_name, CorpusSpec, EnvironmentKind};
pub use environment::{env_force, EnvironmentModel};
pub use human::{
    human_force, min_jerk, FeedStart, HumanConfig, HumanModel, HumanPhase, HumanState, SubjectImpedance,
};
pub use record::{meta_path, Sample, TrialMeta, TrialRecord, TRIAL_HEADER};
pub use robot::{robot_step, robot_step_with, RobotState, RobotSurrogate};
pub use trial::{
    run_trial, Controller, LabelSource, LabelSpike, LoopConfig, TrainingController, TrialSpec,
};
