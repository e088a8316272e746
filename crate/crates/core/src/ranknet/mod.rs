//! Scoring heads, the residual generator, and the pair-input baseline.

mod baseline;
mod generator;
mod head;
mod persist;

use thiserror::Error;

use crate::featstore::FeatureMap;
use crate::numkernel::KernelError;

pub use baseline::BaselinePairModel;
pub use generator::{BoundGenerator, GeneratorModel};
pub use head::{BoundRanker, HeadCOrder, HeadKind, RankerModel};
pub use persist::{load_generator, load_ranker, save_generator, save_ranker, sidecar_path, ModelMeta};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("operation needs head {expected}, model has head {found}")]
    WrongHead { expected: HeadKind, found: HeadKind },
    #[error("feature map has {found} channels, model expects {expected}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

impl ModelError {
    pub fn is_numeric_fault(&self) -> bool {
        matches!(self, ModelError::Kernel(KernelError::NumericFault(_)))
    }
}

/// Anything that assigns a per-frame goodness score.
pub trait FrameScorer: Sync {
    fn score_frame(&self, f: &FeatureMap) -> Result<f64, ModelError>;

    /// Modelled multiply-accumulate count for one `H×W` frame.
    fn macs(&self, height: usize, width: usize) -> u64;
}

impl FrameScorer for RankerModel {
    fn score_frame(&self, f: &FeatureMap) -> Result<f64, ModelError> {
        self.score(f)
    }

    fn macs(&self, height: usize, width: usize) -> u64 {
        self.mac_count(height, width)
    }
}
