//! SGD training under the five labeling schemes.

mod labels;
mod sgd;

pub use labels::{assign_labels, augment, augment_with, LabelScheme, LabeledSet, AUGMENT_DROP_PROB, MAX_INSTANCE_CLASSES};
pub use sgd::{accuracy, cosine_lr, train, Checkpoint, EpochRecord, TrainConfig, TrainOutcome};
