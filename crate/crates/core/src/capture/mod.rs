//! Capture simulation: a pre/post-shutter ring buffer, per-frame scoring on
//! arrival, best-moment selection, and a throughput benchmark.

mod bench;

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featstore::FeatureMap;
use crate::ranknet::{FrameScorer, ModelError};

pub use bench::{benchmark_interleaved, benchmark_scoring, BenchInput, BenchReport, ModeStats};

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("invalid capture configuration: {0}")]
    Config(String),
    #[error("no frames retained")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Feature(#[from] crate::featstore::FeatureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingBufferConfig {
    pub n_pre: usize,
    pub n_post: usize,
    /// Logical milliseconds between frames.
    pub frame_interval_ms: f64,
}

impl Default for RingBufferConfig {
    fn default() -> Self {
        Self {
            n_pre: 5,
            n_post: 6,
            frame_interval_ms: 33.0,
        }
    }
}

impl RingBufferConfig {
    pub fn validate(&self) -> Result<(), CaptureError> {
        if self.n_pre + self.n_post < 2 {
            return Err(CaptureError::Config("n_pre + n_post must be at least 2".into()));
        }
        if !(self.frame_interval_ms >= 0.0 && self.frame_interval_ms.is_finite()) {
            return Err(CaptureError::Config("frame interval must be a non-negative number".into()));
        }
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.n_pre + self.n_post
    }
}

/// How per-frame scoring latency is recorded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Timing {
    /// Measured with the host clock.
    Wall,
    /// `macs × ns_per_mac`, reproducible across runs.
    Modelled { ns_per_mac: f64 },
}

impl Default for Timing {
    fn default() -> Self {
        Timing::Modelled { ns_per_mac: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamFrame {
    pub frame_id: String,
    pub features: FeatureMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetainedFrame {
    pub frame_id: String,
    pub arrival_ms: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptureSession {
    /// Retained frames in arrival order, scores cached at arrival.
    pub retained: Vec<RetainedFrame>,
    pub selected: String,
    pub selected_score: f64,
    pub latencies_ms: Vec<f64>,
    /// The stream ended before `n_pre` pre-shutter or `n_post`
    /// post-shutter frames arrived.
    pub partial: bool,
    pub frames_seen: usize,
    pub evicted: usize,
    pub max_pre_occupancy: usize,
    pub max_occupancy: usize,
}

/// Argmax over cached scores, equal scores going to the smallest frame id.
pub fn select_best(frames: &[RetainedFrame]) -> Option<&RetainedFrame> {
    let mut best: Option<&RetainedFrame> = None;
    for f in frames {
        let better = match best {
            None => true,
            Some(b) => f.score > b.score || (f.score == b.score && f.frame_id < b.frame_id),
        };
        if better {
            best = Some(f);
        }
    }
    best
}

/// Feeds `stream` through the buffer. Frames with index `< shutter_at` are
/// pre-shutter: only the newest `n_pre` are kept, oldest evicted first.
/// After the shutter, `n_post` frames are appended and the rest of the
/// stream is ignored. Each frame is scored once on arrival.
pub fn run_session<S, I>(
    stream: I,
    shutter_at: usize,
    cfg: &RingBufferConfig,
    model: &S,
    timing: Timing,
) -> Result<CaptureSession, CaptureError>
where
    S: FrameScorer + ?Sized,
    I: IntoIterator<Item = StreamFrame>,
{
    cfg.validate()?;
    let mut pre: VecDeque<RetainedFrame> = VecDeque::with_capacity(cfg.n_pre + 1);
    let mut post: Vec<RetainedFrame> = Vec::with_capacity(cfg.n_post);
    let mut latencies = Vec::new();
    let (mut seen, mut evicted, mut max_pre, mut max_total) = (0, 0, 0, 0);
    let mut pre_count = 0;

    for (idx, frame) in stream.into_iter().enumerate() {
        let is_post = idx >= shutter_at;
        if is_post && post.len() == cfg.n_post {
            break;
        }
        seen += 1;
        let t0 = Instant::now();
        let score = model.score_frame(&frame.features)?;
        let latency = match timing {
            Timing::Wall => t0.elapsed().as_secs_f64() * 1e3,
            Timing::Modelled { ns_per_mac } => {
                let (_, h, w) = frame.features.shape();
                model.macs(h, w) as f64 * ns_per_mac / 1e6
            }
        };
        latencies.push(latency);
        let entry = RetainedFrame {
            frame_id: frame.frame_id,
            arrival_ms: idx as f64 * cfg.frame_interval_ms,
            score,
        };
        if is_post {
            post.push(entry);
        } else {
            pre_count += 1;
            pre.push_back(entry);
            if pre.len() > cfg.n_pre {
                pre.pop_front();
                evicted += 1;
            }
            max_pre = max_pre.max(pre.len());
        }
        max_total = max_total.max(pre.len() + post.len());
    }

    let partial = post.len() < cfg.n_post || pre_count < cfg.n_pre;
    let retained: Vec<RetainedFrame> = pre.into_iter().chain(post).collect();
    let best = select_best(&retained).ok_or(CaptureError::Empty)?;
    Ok(CaptureSession {
        selected: best.frame_id.clone(),
        selected_score: best.score,
        retained,
        latencies_ms: latencies,
        partial,
        frames_seen: seen,
        evicted,
        max_pre_occupancy: max_pre,
        max_occupancy: max_total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub p50: f64,
    pub p99: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean: 0.0,
                p50: 0.0,
                p99: 0.0,
            };
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: rank(0.50),
            p99: rank(0.99),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrame {
    pub frame_id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub selected_frame: String,
    pub scores: Vec<ScoredFrame>,
    pub latency_ms: LatencyStats,
    pub partial: bool,
}

impl CaptureSession {
    pub fn report(&self) -> SessionReport {
        SessionReport {
            selected_frame: self.selected.clone(),
            scores: self
                .retained
                .iter()
                .map(|f| ScoredFrame {
                    frame_id: f.frame_id.clone(),
                    score: f.score,
                })
                .collect(),
            latency_ms: LatencyStats::from_samples(&self.latencies_ms),
            partial: self.partial,
        }
    }
}
