//! Pairwise ranking losses, the ranker and generator objectives, and the
//! phased training schedule.

mod config;
mod loss;
mod probe;
mod schedule;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::evaluation::EvalError;
use crate::numkernel::KernelError;
use crate::ranknet::{GeneratorModel, ModelError, RankerModel};

pub use config::{learning_rate, TrainConfig};
pub use loss::{
    generator_batch_loss, generator_loss_and_grads, generator_loss_on_tape, pair_rank_loss, pair_rank_loss_on_tape,
    ranker_batch_loss, ranker_loss_and_grads, ranker_loss_on_tape, sample_batch_noise, SYNTHETIC_MARGIN,
};
pub use probe::{adversarial_stats, AdversarialStats};
pub use schedule::{train, LogRecord, Phase, PhaseCheckpoint, TrainLog, TrainOutput, TrainState};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("no feature map for frame {burst_id}/{frame_id}")]
    MissingFeature { burst_id: String, frame_id: String },
    #[error("numeric fault: {0}")]
    Numeric(String),
    #[error("training diverged at iteration {iter} ({phase}): {reason}")]
    Diverged {
        iter: u64,
        phase: Phase,
        reason: String,
        /// Last finite ranker and generator.
        last: Box<(RankerModel, Option<GeneratorModel>)>,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl TrainError {
    pub fn is_numeric(&self) -> bool {
        matches!(self, TrainError::Numeric(_) | TrainError::Diverged { .. })
    }
}

impl From<KernelError> for TrainError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::NumericFault(msg) => TrainError::Numeric(msg),
            other => TrainError::Model(ModelError::Kernel(other)),
        }
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Kernel(k) => k.into(),
            other => TrainError::Model(other),
        }
    }
}
