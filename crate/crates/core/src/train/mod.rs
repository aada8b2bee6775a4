//! Progressive coarse-to-fine training.
//!
//! Training starts with one active level at `1 / 2^(L-1)` of the full
//! resolution. Every `level_interval` steps the scene is duplicated into
//! the next level, the resolution doubles, optimizer moments reset and
//! density control pauses for `refine_pause` steps. The objective sums a
//! reduced spatial discrepancy for every active level and a DFT magnitude
//! term for all but the top one.

mod adc;
mod config;
mod eval;
mod loss;
mod optim;
mod trainer;

pub use adc::{densify_and_prune, AdcReport, AdcStats, SPLIT_SCALE_DIVISOR};
pub use config::TrainConfig;
pub use eval::{evaluate_levels, LevelReport};
pub use loss::{level_targets, loss_against, loss_grad, total_loss, LossParts};
pub use optim::{exponential_decay, AdamGroup, LearningRates, SceneOptimizer, BETA1, BETA2, EPSILON};
pub use trainer::{
    advance_schedule, camera_extent, random_init, render_options, save_metrics_csv, train_step, write_metrics_csv, MetricsRow,
    TrainState, Trainer, View,
};
