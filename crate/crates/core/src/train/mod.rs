//! Optimiser, schedule, training loop, evaluation and the
//! leave-one-subject-out harness.

mod fit;
mod loso;
mod metrics;
mod optim;
mod probe;

pub use fit::{
    accuracy, argmax_rows, batch_tensors, evaluate, fit, predict, FitReport, TrainConfig,
};
pub use loso::{loso_evaluate, loso_folds, run_fold, DiffRow, FoldResult, LosoConfig, LosoReport};
pub use metrics::{mean_and_population_std, Metrics};
pub use optim::{cosine_lr, AdamW, AdamWConfig};
pub use probe::{probe_attenuation, ProbeReport};
