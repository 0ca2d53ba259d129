//! Imbalance-aware losses for binary classification.
//!
//! Cross entropy, weighted cross entropy, per-sample and set-level dice
//! loss, Tversky loss, self-adjusting dice loss and focal loss, each with a
//! closed-form gradient with respect to the positive-class probability.
//! Around them sit F1-oriented metrics, a seeded synthetic data generator,
//! a small deterministic SGD trainer, finite-difference oracles and an
//! experiment runner that produces CSV result tables.

pub mod data;
pub mod error;
pub mod experiment;
pub mod loss;
pub mod metrics;
pub mod rng;
pub mod trainer;
pub mod verify;

pub use data::{generate, transform, DataSpec, LabeledBatch, TransformKind, TransformSpec};
pub use error::{Error, Result};
pub use experiment::{run, sweep, sweep_tversky, ExperimentConfig, ResultRow};
pub use loss::{
    batch_mean_loss, ce_loss, dice_coefficient_sample, dl_sample_loss, dl_set_loss, dsc_selfadj_loss,
    focal_loss, tversky_loss, wce_class_coefficient, wce_loss, BatchLossValueGrad, ClassWeights,
    LossKind, LossSpec, LossValueGrad, OneHotLabel, ProbPair,
};
pub use metrics::{confusion, harden, metrics_from_counts, set_dice, ClassifierMetrics, ConfusionCounts};
pub use trainer::{evaluate, train, ModelSpec, TrainSpec, TrainedModel};
pub use verify::{brute_force_best_threshold_f1, finite_diff_grad, gradcheck_all, GradCheckReport};
