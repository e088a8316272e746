//! Feature maps, the `BRF1` feature file format, and the fixed filter-bank
//! extractor used in place of a learned backbone.

mod extract;
mod format;

use thiserror::Error;

use crate::numkernel::Tensor;

pub use extract::{extract_features, read_pgm, write_pgm, GrayImage, FILTER_BANK_SIZE};
pub use format::{decode_feature_map, encode_feature_map, read_feature_map, write_feature_map, FEATURE_MAGIC};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid feature map: {0}")]
    Invalid(String),
    #[error("bad magic {0:?}, expected \"BRF1\"")]
    BadMagic([u8; 4]),
    #[error("truncated feature file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("image: {0}")]
    Image(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A `C×H×W` map of finite `f32` values, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self, FeatureError> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(FeatureError::Invalid(format!(
                "dimensions must be positive, got {channels}×{height}×{width}"
            )));
        }
        let n = channels * height * width;
        if data.len() != n {
            return Err(FeatureError::Invalid(format!(
                "{channels}×{height}×{width} needs {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(i));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Rounds `f64` values to `f32`.
    pub fn from_f64(channels: usize, height: usize, width: usize, data: &[f64]) -> Result<Self, FeatureError> {
        Self::new(channels, height, width, data.iter().map(|&v| v as f32).collect())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, c: usize, h: usize, w: usize) -> f32 {
        self.data[(c * self.height + h) * self.width + w]
    }

    /// Mean of one channel.
    pub fn channel_mean(&self, c: usize) -> f64 {
        let plane = self.height * self.width;
        self.data[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>() / plane as f64
    }

    /// Widened copy for the numeric kernel.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![self.channels, self.height, self.width],
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("dimensions validated at construction")
    }
}
