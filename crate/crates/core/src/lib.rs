#![no_std]
//! Bidirectional cross-attention fusion of paired audio and text embedding
//! sequences, with the auxiliary recombination tasks, a small reverse-mode
//! autodiff tape, AdamW, and session-wise cross-validation.

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod auxiliary;
pub mod batch;
pub mod cv;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod train;

pub use auxiliary::{build_aux1, build_aux2, combined_label, split_combined_label, Aux1Batch, Aux2Batch};
pub use batch::Batch;
pub use cv::{fold_config, fold_seed, holdout_split, run_cv, run_fold, split_by_session, CvReport, Fold, FoldReport};
pub use data::{ClassPools, Dataset, DatasetMeta, FeatureSequence, ModalityKind, Sample};
pub use error::{Error, Result, TensorError};
pub use fusion::{FusionConfig, FusionKind, FusionModelParams, FusionParams, Modality};
pub use metrics::{unweighted_accuracy, weighted_accuracy, ConfusionMatrix};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use synth::{synth_generate, SynthConfig, SynthGenerator, SynthMode};
pub use tape::{Fault, Tape, Var};
pub use tensor::Tensor;
pub use train::{evaluate, train, TrainConfig, TrainOutcome};
