use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CaptureError, LatencyStats};
use crate::featstore::{extract_features, FeatureMap, GrayImage, FILTER_BANK_SIZE};
use crate::ranknet::FrameScorer;

/// What one benchmarked frame consists of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchInput {
    /// Precomputed `C×H×W` maps; only the head is timed.
    Features { channels: usize, height: usize, width: usize },
    /// `size×size` grayscale frames; feature extraction to `8×H×W` plus the
    /// head are timed together.
    Images { size: usize, height: usize, width: usize },
}

impl fmt::Display for BenchInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchInput::Features { channels, height, width } => write!(f, "features {channels}x{height}x{width}"),
            BenchInput::Images { size, height, width } => {
                write!(f, "images {size}x{size} -> {FILTER_BANK_SIZE}x{height}x{width}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub threads: usize,
    pub samples: usize,
    pub latency_ms: LatencyStats,
    pub fps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub input: String,
    pub n_frames: usize,
    pub single_thread: ModeStats,
    pub multi_thread: ModeStats,
}

enum Frames {
    Maps(Vec<FeatureMap>),
    Images(Vec<GrayImage>, (usize, usize, usize)),
}

impl Frames {
    fn generate(input: BenchInput, n: usize, seed: u64) -> Result<Self, CaptureError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match input {
            BenchInput::Features { channels, height, width } => Frames::Maps(
                (0..n)
                    .map(|_| {
                        let data = (0..channels * height * width).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                        FeatureMap::new(channels, height, width, data)
                    })
                    .collect::<Result<_, _>>()?,
            ),
            BenchInput::Images { size, height, width } => Frames::Images(
                (0..n)
                    .map(|_| {
                        let px = (0..size * size).map(|_| rng.random::<u8>()).collect();
                        GrayImage::new(size, size, px)
                    })
                    .collect::<Result<_, _>>()?,
                (FILTER_BANK_SIZE, height, width),
            ),
        })
    }

    fn len(&self) -> usize {
        match self {
            Frames::Maps(m) => m.len(),
            Frames::Images(i, _) => i.len(),
        }
    }

    /// Processes frame `i`, returning its score and latency in ms.
    fn run<S: FrameScorer + ?Sized>(&self, model: &S, i: usize) -> Result<(f64, f64), CaptureError> {
        let t0 = Instant::now();
        let score = match self {
            Frames::Maps(m) => model.score_frame(&m[i])?,
            Frames::Images(imgs, target) => model.score_frame(&extract_features(&imgs[i], *target)?)?,
        };
        Ok((score, t0.elapsed().as_secs_f64() * 1e3))
    }
}

const WARMUP_FRAMES: usize = 10;

fn stats(latencies: &[f64], wall_s: f64, threads: usize) -> ModeStats {
    ModeStats {
        threads,
        samples: latencies.len(),
        latency_ms: LatencyStats::from_samples(latencies),
        fps: if wall_s > 0.0 { latencies.len() as f64 / wall_s } else { 0.0 },
    }
}

/// Host-side per-frame latency of `model` on `n_frames` seeded random
/// inputs (n_frames ≥ 100), single-threaded and on `threads` workers
/// (0 = all cores).
pub fn benchmark_scoring<S: FrameScorer + ?Sized>(
    model: &S,
    input: BenchInput,
    n_frames: usize,
    threads: usize,
    seed: u64,
) -> Result<BenchReport, CaptureError> {
    if n_frames < 100 {
        return Err(CaptureError::Config(format!("benchmark needs at least 100 frames, got {n_frames}")));
    }
    let frames = Frames::generate(input, n_frames, seed)?;
    for i in 0..WARMUP_FRAMES.min(frames.len()) {
        std::hint::black_box(frames.run(model, i)?);
    }

    let t0 = Instant::now();
    let mut single = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let (score, ms) = frames.run(model, i)?;
        std::hint::black_box(score);
        single.push(ms);
    }
    let single_wall = t0.elapsed().as_secs_f64();

    let (multi, multi_wall, workers) = crate::with_threads(threads, || {
        let t0 = Instant::now();
        let res = (0..n_frames)
            .into_par_iter()
            .map(|i| frames.run(model, i).map(|(s, ms)| std::hint::black_box((s, ms)).1))
            .collect::<Result<Vec<f64>, CaptureError>>();
        (res, t0.elapsed().as_secs_f64(), rayon::current_num_threads())
    });
    let multi = multi?;

    Ok(BenchReport {
        input: input.to_string(),
        n_frames,
        single_thread: stats(&single, single_wall, 1),
        multi_thread: stats(&multi, multi_wall, workers),
    })
}

/// Single-threaded latency of several models on the same frames, run
/// round-robin per frame so that host drift affects all of them alike.
pub fn benchmark_interleaved<S: FrameScorer + ?Sized>(
    models: &[&S],
    input: BenchInput,
    n_frames: usize,
    seed: u64,
) -> Result<Vec<ModeStats>, CaptureError> {
    if n_frames < 100 {
        return Err(CaptureError::Config(format!("benchmark needs at least 100 frames, got {n_frames}")));
    }
    let frames = Frames::generate(input, n_frames, seed)?;
    for m in models {
        for i in 0..WARMUP_FRAMES.min(frames.len()) {
            std::hint::black_box(frames.run(*m, i)?);
        }
    }
    let mut samples = vec![Vec::with_capacity(n_frames); models.len()];
    for i in 0..n_frames {
        for (k, m) in models.iter().enumerate() {
            let (score, ms) = frames.run(*m, i)?;
            std::hint::black_box(score);
            samples[k].push(ms);
        }
    }
    Ok(samples
        .iter()
        .map(|s| stats(s, s.iter().sum::<f64>() / 1e3, 1))
        .collect())
}
