//! Pairwise and Top-K burst metrics, plus latent-attribute gap reports.

mod gaps;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureBank, LabeledDataset, PairLabel, Split};
use crate::ranknet::{FrameScorer, ModelError};

pub use gaps::{attribute_gap_report, pearson, AttributeGapReport, GapHistogram, GapRow};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no score for frame {burst_id}/{frame_id}")]
    MissingScore { burst_id: String, frame_id: String },
    #[error("no feature map for frame {burst_id}/{frame_id}")]
    MissingFeature { burst_id: String, frame_id: String },
    #[error("K must be at least 1")]
    InvalidK,
    #[error("no non-tie pairs to evaluate")]
    NoPairs,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Per-frame scores of one burst.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BurstScores {
    pub burst_id: String,
    pub scores: BTreeMap<String, f64>,
}

impl BurstScores {
    /// Highest-scoring frame; equal scores go to the smallest frame id.
    pub fn best(&self) -> Option<&str> {
        let mut best: Option<(&str, f64)> = None;
        for (id, &s) in &self.scores {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((id, s));
            }
        }
        best.map(|(id, _)| id)
    }
}

/// Scores keyed by burst id.
pub type ScoreSet = BTreeMap<String, BurstScores>;

fn lookup(scores: &ScoreSet, burst_id: &str, frame_id: &str) -> Result<f64, EvalError> {
    scores
        .get(burst_id)
        .and_then(|b| b.scores.get(frame_id))
        .copied()
        .ok_or_else(|| EvalError::MissingScore {
            burst_id: burst_id.into(),
            frame_id: frame_id.into(),
        })
}

/// Scores every frame of the bursts in `split` (all bursts if `None`).
/// `threads` = 0 uses all cores; output does not depend on it.
pub fn score_bursts<S: FrameScorer + ?Sized>(
    model: &S,
    ds: &LabeledDataset,
    bank: &FeatureBank,
    split: Option<Split>,
    threads: usize,
) -> Result<ScoreSet, EvalError> {
    let bursts: Vec<_> = ds.bursts().filter(|b| split.is_none_or(|s| b.split == s)).collect();
    let run = || {
        bursts
            .par_iter()
            .map(|b| {
                let mut out = BurstScores {
                    burst_id: b.burst_id.clone(),
                    scores: BTreeMap::new(),
                };
                for f in &b.frames {
                    let map = bank.get(&b.burst_id, &f.frame_id).ok_or_else(|| EvalError::MissingFeature {
                        burst_id: b.burst_id.clone(),
                        frame_id: f.frame_id.clone(),
                    })?;
                    out.scores.insert(f.frame_id.clone(), model.score_frame(map)?);
                }
                Ok((b.burst_id.clone(), out))
            })
            .collect::<Result<ScoreSet, EvalError>>()
    };
    crate::with_threads(threads, run)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseCounts {
    pub correct: usize,
    pub evaluated: usize,
    pub ties_excluded: usize,
}

impl PairwiseCounts {
    pub fn accuracy(&self) -> Option<f64> {
        (self.evaluated > 0).then(|| self.correct as f64 / self.evaluated as f64)
    }
}

/// Non-tie pairs are correct iff `f(better) > f(other)` strictly; tie
/// labels are skipped.
pub fn pairwise_counts(scores: &ScoreSet, pairs: &[PairLabel]) -> Result<PairwiseCounts, EvalError> {
    let mut c = PairwiseCounts::default();
    for p in pairs {
        let fa = lookup(scores, &p.burst_id, &p.better)?;
        let fb = lookup(scores, &p.burst_id, &p.other)?;
        if p.is_tie() {
            c.ties_excluded += 1;
            continue;
        }
        c.evaluated += 1;
        if fa > fb {
            c.correct += 1;
        }
    }
    Ok(c)
}

pub fn pairwise_accuracy(scores: &ScoreSet, pairs: &[PairLabel]) -> Result<f64, EvalError> {
    pairwise_counts(scores, pairs)?.accuracy().ok_or(EvalError::NoPairs)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TopKCounts {
    pub hits: usize,
    pub bursts: usize,
    /// Unlabeled comparisons against the predicted best frame.
    pub missing_labels: usize,
}

impl TopKCounts {
    pub fn accuracy(&self) -> Option<f64> {
        (self.bursts > 0).then(|| self.hits as f64 / self.bursts as f64)
    }
}

/// Number of frames labeled strictly better than `best` within a burst,
/// and how many comparisons had no label.
fn better_than(ds: &LabeledDataset, burst_id: &str, best: &str) -> (usize, usize) {
    let mut count = 0;
    let mut seen = 0;
    for &i in ds.pair_indices(burst_id) {
        let p = &ds.pairs()[i];
        if p.other == best && !p.is_tie() {
            count += 1;
        }
        if p.better == best || p.other == best {
            seen += 1;
        }
    }
    let frames = ds.burst(burst_id).map_or(0, |b| b.frames.len());
    (count, frames.saturating_sub(1).saturating_sub(seen))
}

/// Top-K over the bursts present in `scores`. A burst is a hit when at most
/// `K−1` frames are labeled strictly better than its argmax frame; missing
/// comparisons count as not better.
pub fn topk_counts(ds: &LabeledDataset, scores: &ScoreSet, k: usize) -> Result<TopKCounts, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let mut c = TopKCounts::default();
    for (burst_id, bs) in scores {
        let burst = ds
            .burst(burst_id)
            .ok_or_else(|| EvalError::Invalid(format!("scores reference unknown burst '{burst_id}'")))?;
        for f in &burst.frames {
            lookup(scores, burst_id, &f.frame_id)?;
        }
        let Some(best) = bs.best() else { continue };
        let (better, missing) = better_than(ds, burst_id, best);
        if missing > 0 {
            log::warn!("burst {burst_id}: {missing} comparisons with {best} unlabeled, counted as not better");
        }
        c.missing_labels += missing;
        c.bursts += 1;
        if better < k {
            c.hits += 1;
        }
    }
    Ok(c)
}

pub fn topk_accuracy(ds: &LabeledDataset, scores: &ScoreSet, k: usize) -> Result<f64, EvalError> {
    topk_counts(ds, scores, k)?
        .accuracy()
        .ok_or_else(|| EvalError::Invalid("no bursts to evaluate".into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pairwise_accuracy: Option<f64>,
    /// `"1"`, `"2"`, `"3"` → Top-K accuracy.
    pub topk: BTreeMap<String, f64>,
    pub pairs_evaluated: usize,
    pub ties_excluded: usize,
    pub bursts_evaluated: usize,
    pub missing_labels: usize,
}

/// Pairwise and Top-1/2/3 over the bursts in `scores`.
pub fn metric_report(ds: &LabeledDataset, scores: &ScoreSet) -> Result<MetricReport, EvalError> {
    let pairs: Vec<PairLabel> = ds.pairs().iter().filter(|p| scores.contains_key(&p.burst_id)).cloned().collect();
    let pw = pairwise_counts(scores, &pairs)?;
    let mut topk = BTreeMap::new();
    let mut last = TopKCounts::default();
    for k in 1..=3 {
        last = topk_counts(ds, scores, k)?;
        topk.insert(k.to_string(), last.accuracy().unwrap_or(0.0));
    }
    Ok(MetricReport {
        pairwise_accuracy: pw.accuracy(),
        topk,
        pairs_evaluated: pw.evaluated,
        ties_excluded: pw.ties_excluded,
        bursts_evaluated: last.bursts,
        missing_labels: last.missing_labels,
    })
}
