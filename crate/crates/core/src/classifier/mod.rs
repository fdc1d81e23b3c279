//! Feed-forward subtask classifier: windowed features, model, training and
//! evaluation.

mod eval;
mod features;
mod mlp;
mod network;
mod train;

pub use eval::{evaluate, predict_trial, transition_delays, ClassificationReport};
pub use features::{
    label_trial, window_at, FeatureStats, OnlineClassifier, DRIVING_THRESHOLD, N_FEATURES, SEQ_LEN,
};
pub use mlp::{softmax, Layer, MlpModel, MODEL_FORMAT, MODEL_VERSION};
pub use network::{Gradients, Network};
pub use train::{build_dataset, split_by_trial, train, Dataset, EpochStats, TrainConfig, TrainReport};

/// Number of output classes (Idle, Driving, Contact).
pub const N_CLASSES: usize = 3;

/// Flattened input width.
pub const INPUT_DIM: usize = SEQ_LEN * N_FEATURES;
