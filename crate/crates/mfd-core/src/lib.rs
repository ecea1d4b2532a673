//! Fairness-aware feature distillation with MMD regularization.
//!
//! The crate trains small MLP classifiers on group-annotated data and
//! transfers a teacher's penultimate features to a student through a
//! per-(group, class) maximum mean discrepancy penalty, so that every
//! sensitive group's features for a class are pulled toward the same
//! class-level teacher distribution. Alongside the estimator and its
//! ablations it ships equalized-odds metrics, a reverse-mode scalar graph,
//! a deterministic synthetic data generator with controllable group skew,
//! a plateau-decay Adam trainer, and a verification battery that checks the
//! estimator's two ordering inequalities and every gradient against finite
//! differences.
//!
//! Modules, bottom up:
//!
//! * [`error`], [`rng`], [`tensor`]: shared plumbing.
//! * [`graph`]: reverse-mode automatic differentiation over tensors.
//! * [`kernel`]: RBF kernels, biased MMD estimates, the grouped regularizer.
//! * [`fairness`]: per-(group, class) accuracy and DEO metrics.
//! * [`data`]: synthetic skewed datasets, samplers, binary serialization.
//! * [`model`]: MLP forward passes and checkpoints.
//! * [`objectives`]: CE, the MMD regularizers, HKD and FitNet baselines.
//! * [`trainer`]: Adam with plateau decay, evaluation, multi-seed runs.
//! * [`lemmas`]: randomized verification of the two bounds plus a gradient
//!   battery.
//! * [`report`], [`experiment`]: result aggregation and experiment plumbing.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod graph;
pub mod kernel;
pub mod lemmas;
pub mod model;
pub mod objectives;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
