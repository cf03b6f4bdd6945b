//! Dataset manifests, leakage-safe splitting and the optimization loop.

pub mod loss;
pub mod manifest;
pub mod optim;
pub mod split;
pub mod trainer;

pub use loss::{l2_penalty, smoothed_scce, total_loss};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use optim::{clip_global_norm, Adam, EarlyStopping, PlateauScheduler};
pub use split::{split_dataset, Partition, SplitAssignment};
pub use trainer::{train, validate, CounterSnapshot, EpochLog, Example, PipelineCounters, TrainConfig, TrainOutcome};
