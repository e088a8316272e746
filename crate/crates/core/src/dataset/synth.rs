//! Planted-oracle data generator.
//!
//! Each frame gets a latent attribute vector `a ∈ [0,1]^C′`; its planted
//! score is `w*·a`. The attributes are rendered into a `C×H×W` feature map
//! through a fixed random orthonormal embedding `Q` (C×C′):
//!
//! ```text
//! f[:, h, w] = Q·a + scene(burst) + noise(h, w),   |noise| ≤ noise_amplitude
//! ```
//!
//! Pair labels come straight from planted score differences and the two
//! thresholds, so every label is reproducible from the oracle.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{simulate_votes, Burst, DatasetError, FeatureBank, Frame, LabeledDataset, PairLabel, Split, VoteSet};
use crate::featstore::FeatureMap;

/// Index of the attribute treated as "sharpness" in reports.
pub const SHARPNESS_ATTR: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Latent attribute count C′.
    pub attrs: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Planted weights `w*`; defaults to `1/(k+1)` so attribute 0 dominates.
    pub planted_weights: Option<Vec<f64>>,
    /// `(t0, t1)`: `|Δs| < t0` is a tie, `< t1` is marginal, else significant.
    pub thresholds: (f64, f64),
    pub noise_amplitude: f64,
    /// Per-burst constant offset added to every channel, drawn from
    /// `U(-scene_amplitude, scene_amplitude)`.
    pub scene_amplitude: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            attrs: 5,
            channels: 8,
            height: 4,
            width: 4,
            planted_weights: None,
            thresholds: (0.2, 0.6),
            noise_amplitude: 0.05,
            scene_amplitude: 0.2,
            val_fraction: 0.1,
            test_fraction: 0.2,
        }
    }
}

impl SynthConfig {
    pub fn weights(&self) -> Vec<f64> {
        self.planted_weights
            .clone()
            .unwrap_or_else(|| (0..self.attrs).map(|k| 1.0 / (k as f64 + 1.0)).collect())
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let (t0, t1) = self.thresholds;
        if !(t0 >= 0.0 && t0 < t1 && t1.is_finite()) {
            return Err(DatasetError::Invalid(format!(
                "thresholds must satisfy 0 ≤ t0 < t1, got ({t0}, {t1})"
            )));
        }
        if self.attrs == 0 {
            return Err(DatasetError::Invalid("attribute count must be at least 1".into()));
        }
        if self.channels < self.attrs {
            return Err(DatasetError::Invalid(format!(
                "orthonormal embedding needs channels ({}) ≥ attrs ({})",
                self.channels, self.attrs
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(DatasetError::Invalid("feature map size must be positive".into()));
        }
        if self.weights().len() != self.attrs {
            return Err(DatasetError::Invalid(format!(
                "{} planted weights for {} attributes",
                self.weights().len(),
                self.attrs
            )));
        }
        let fr = self.val_fraction + self.test_fraction;
        if self.val_fraction < 0.0 || self.test_fraction < 0.0 || fr > 1.0 {
            return Err(DatasetError::Invalid("split fractions must be non-negative and sum to ≤ 1".into()));
        }
        Ok(())
    }
}

/// Ground truth behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticOracle {
    pub planted_weights: Vec<f64>,
    pub thresholds: (f64, f64),
    /// Column-orthonormal C×C′ embedding, row-major.
    pub embedding: Vec<f64>,
    pub attribute_field: BTreeMap<(String, String), Vec<f64>>,
}

impl SyntheticOracle {
    pub fn attributes(&self, burst_id: &str, frame_id: &str) -> Option<&[f64]> {
        self.attribute_field
            .get(&(burst_id.to_string(), frame_id.to_string()))
            .map(Vec::as_slice)
    }

    pub fn planted_score_of(&self, attrs: &[f64]) -> f64 {
        self.planted_weights.iter().zip(attrs).map(|(w, a)| w * a).sum()
    }

    pub fn planted_score(&self, burst_id: &str, frame_id: &str) -> Option<f64> {
        self.attributes(burst_id, frame_id).map(|a| self.planted_score_of(a))
    }

    /// Noise-free map embedding `attrs`, with no scene offset.
    pub fn oracle_map(&self, attrs: &[f64], height: usize, width: usize) -> Result<FeatureMap, DatasetError> {
        let k = self.planted_weights.len();
        if attrs.len() != k {
            return Err(DatasetError::Invalid(format!("expected {k} attributes, got {}", attrs.len())));
        }
        let c = self.embedding.len() / k;
        let mut data = Vec::with_capacity(c * height * width);
        for ci in 0..c {
            let v: f64 = (0..k).map(|j| self.embedding[ci * k + j] * attrs[j]).sum();
            data.extend(std::iter::repeat_n(v, height * width));
        }
        FeatureMap::from_f64(c, height, width, &data).map_err(|e| DatasetError::Invalid(e.to_string()))
    }

    /// Label magnitude for a planted score difference.
    pub fn label_for_diff(&self, diff: f64) -> u8 {
        let d = diff.abs();
        if d < self.thresholds.0 {
            0
        } else if d < self.thresholds.1 {
            1
        } else {
            2
        }
    }

    /// Canonically oriented label for two frames with planted scores.
    pub fn label_pair(&self, burst_id: &str, a: (&str, f64), b: (&str, f64)) -> PairLabel {
        let diff = a.1 - b.1;
        let mag = self.label_for_diff(diff) as i8;
        PairLabel::oriented(burst_id, a.0, b.0, if diff < 0.0 { -mag } else { mag })
    }
}

pub struct SynthOutput {
    pub dataset: LabeledDataset,
    pub oracle: SyntheticOracle,
    pub features: FeatureBank,
}

/// Random C×C′ matrix with orthonormal columns (modified Gram–Schmidt on a
/// Gaussian draw).
fn orthonormal_columns<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (j, q) in basis.iter().enumerate() {
        for i in 0..rows {
            out[i * cols + j] = q[i];
        }
    }
    out
}

fn frame_ids(n: usize) -> Vec<String> {
    let width = (n.saturating_sub(1)).to_string().len().max(2);
    (0..n).map(|i| format!("f{i:0width$}")).collect()
}

/// Generates `n_bursts` bursts of `frames_per_burst` frames and labels
/// every intra-burst pair.
pub fn synth_generate(
    cfg: &SynthConfig,
    n_bursts: usize,
    frames_per_burst: usize,
    seed: u64,
) -> Result<SynthOutput, DatasetError> {
    cfg.validate()?;
    if frames_per_burst < 2 {
        return Err(DatasetError::Invalid("bursts need at least 2 frames".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w, k) = (cfg.channels, cfg.height, cfg.width, cfg.attrs);
    let embedding = orthonormal_columns(c, k, &mut rng);

    let n_val = (n_bursts as f64 * cfg.val_fraction).round() as usize;
    let n_test = ((n_bursts as f64 * cfg.test_fraction).round() as usize).min(n_bursts - n_val.min(n_bursts));
    let mut order: Vec<usize> = (0..n_bursts).collect();
    order.shuffle(&mut rng);
    let mut splits = vec![Split::Train; n_bursts];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_val {
            splits[i] = Split::Val;
        } else if rank < n_val + n_test {
            splits[i] = Split::Test;
        }
    }

    let mut oracle = SyntheticOracle {
        planted_weights: cfg.weights(),
        thresholds: cfg.thresholds,
        embedding,
        attribute_field: BTreeMap::new(),
    };
    let ids = frame_ids(frames_per_burst);
    let id_width = n_bursts.saturating_sub(1).to_string().len().max(4);
    let mut bursts = Vec::with_capacity(n_bursts);
    let mut pairs = Vec::new();
    let mut features = FeatureBank::default();

    for (bi, &split) in splits.iter().enumerate() {
        let burst_id = format!("b{bi:0id_width$}");
        let scene: Vec<f64> = (0..c)
            .map(|_| rng.random_range(-1.0..=1.0) * cfg.scene_amplitude)
            .collect();
        let mut frames = Vec::with_capacity(frames_per_burst);
        let mut scores = Vec::with_capacity(frames_per_burst);
        for fid in &ids {
            let attrs: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let embedded: Vec<f64> = (0..c)
                .map(|ci| (0..k).map(|j| oracle.embedding[ci * k + j] * attrs[j]).sum::<f64>() + scene[ci])
                .collect();
            let mut data = Vec::with_capacity(c * h * w);
            for &base in &embedded {
                for _ in 0..h * w {
                    data.push(base + rng.random_range(-1.0..=1.0) * cfg.noise_amplitude);
                }
            }
            let map = FeatureMap::from_f64(c, h, w, &data).map_err(|e| DatasetError::Invalid(e.to_string()))?;
            features.insert(&burst_id, fid, map);
            scores.push(oracle.planted_score_of(&attrs));
            oracle.attribute_field.insert((burst_id.clone(), fid.clone()), attrs);
            frames.push(Frame {
                frame_id: fid.clone(),
                feature_ref: format!("features/{burst_id}_{fid}.brf"),
            });
        }
        for i in 0..frames_per_burst {
            for j in i + 1..frames_per_burst {
                pairs.push(oracle.label_pair(&burst_id, (&ids[i], scores[i]), (&ids[j], scores[j])));
            }
        }
        bursts.push(Burst {
            burst_id,
            split,
            frames,
        });
    }
    let dataset = LabeledDataset::new(bursts, pairs)?;
    Ok(SynthOutput {
        dataset,
        oracle,
        features,
    })
}

/// AMT-style raw votes for every labeled pair of a synthetic dataset.
pub fn synth_votes(
    out: &SynthOutput,
    n_voters: usize,
    annotator_noise: f64,
    seed: u64,
) -> Vec<VoteSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.dataset
        .pairs()
        .iter()
        .map(|p| {
            let sa = out.oracle.planted_score(&p.burst_id, &p.better).expect("planted frame");
            let sb = out.oracle.planted_score(&p.burst_id, &p.other).expect("planted frame");
            VoteSet {
                burst_id: p.burst_id.clone(),
                frame_a: p.better.clone(),
                frame_b: p.other.clone(),
                votes: simulate_votes(sa - sb, out.oracle.thresholds, n_voters, annotator_noise, &mut rng),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = orthonormal_columns(8, 5, &mut rng);
        for a in 0..5 {
            for b in 0..5 {
                let d: f64 = (0..8).map(|i| q[i * 5 + a] * q[i * 5 + b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn threshold_rule() {
        let oracle = SyntheticOracle {
            planted_weights: vec![1.0],
            thresholds: (0.1, 0.5),
            embedding: vec![1.0],
            attribute_field: BTreeMap::new(),
        };
        let p = oracle.label_pair("b", ("f0", 0.9), ("f1", 0.1));
        assert_eq!((p.better.as_str(), p.delta_y), ("f0", 2));
        let q = oracle.label_pair("b", ("f0", 0.3), ("f1", 0.3));
        assert_eq!((q.better.as_str(), q.delta_y), ("f0", 0));
        let r = oracle.label_pair("b", ("f0", 0.1), ("f1", 0.3));
        assert_eq!((r.better.as_str(), r.delta_y), ("f1", 1));
    }

    #[test]
    fn pair_count_is_combinatorial() {
        let out = synth_generate(&SynthConfig::default(), 100, 11, 3).unwrap();
        assert_eq!(out.dataset.pairs().len(), 100 * 55);
        assert_eq!(out.dataset.num_bursts(), 100);
        assert_eq!(out.dataset.bursts_in(Split::Val).count(), 10);
        assert_eq!(out.dataset.bursts_in(Split::Test).count(), 20);
        assert_eq!(out.features.len(), 1100);
    }

    #[test]
    fn labels_reproducible_from_planted_scores() {
        let out = synth_generate(&SynthConfig::default(), 10, 6, 8).unwrap();
        for p in out.dataset.pairs() {
            let sa = out.oracle.planted_score(&p.burst_id, &p.better).unwrap();
            let sb = out.oracle.planted_score(&p.burst_id, &p.other).unwrap();
            assert_eq!(out.oracle.label_for_diff(sa - sb), p.delta_y);
            if p.delta_y > 0 {
                assert!(sa > sb);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_generate(&SynthConfig::default(), 5, 4, 21).unwrap();
        let b = synth_generate(&SynthConfig::default(), 5, 4, 21).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.oracle, b.oracle);
        assert_eq!(a.features, b.features);
        let c = synth_generate(&SynthConfig::default(), 5, 4, 22).unwrap();
        assert_ne!(a.oracle, c.oracle);
    }

    #[test]
    fn rejects_degenerate_thresholds() {
        let cfg = SynthConfig {
            thresholds: (0.5, 0.5),
            ..SynthConfig::default()
        };
        assert!(synth_generate(&cfg, 2, 2, 0).is_err());
        let cfg = SynthConfig {
            attrs: 9,
            ..SynthConfig::default()
        };
        assert!(synth_generate(&cfg, 2, 2, 0).is_err());
    }

    #[test]
    fn identical_attributes_tie() {
        let oracle = SyntheticOracle {
            planted_weights: vec![1.0, 0.5],
            thresholds: (0.2, 0.6),
            embedding: vec![],
            attribute_field: BTreeMap::new(),
        };
        let a = [0.3, 0.8];
        let s = oracle.planted_score_of(&a);
        assert_eq!(oracle.label_pair("b", ("f1", s), ("f0", s)).delta_y, 0);
    }

    #[test]
    fn labels_never_contradict_planted_order() {
        let out = synth_generate(&SynthConfig::default(), 20, 8, 5).unwrap();
        let idx = out.dataset.label_index();
        for b in out.dataset.bursts() {
            let ids: Vec<&str> = b.frames.iter().map(|f| f.frame_id.as_str()).collect();
            for &x in &ids {
                for &y in &ids {
                    for &z in &ids {
                        let s = |f: &str| out.oracle.planted_score(&b.burst_id, f).unwrap();
                        if !(s(x) > s(y) && s(y) > s(z)) {
                            continue;
                        }
                        for (hi, lo) in [(x, y), (y, z), (x, z)] {
                            let key = if hi < lo { (b.burst_id.as_str(), hi, lo) } else { (b.burst_id.as_str(), lo, hi) };
                            let p = idx[&key];
                            if p.delta_y != 0 {
                                assert_eq!(p.better, hi);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tie_fraction_is_reported() {
        let out = synth_generate(&SynthConfig::default(), 50, 11, 1).unwrap();
        let t = out.dataset.tie_fraction().unwrap();
        assert!(t > 0.0 && t < 1.0);
        let votes = synth_votes(&out, 5, 0.1, 2);
        assert_eq!(votes.len(), out.dataset.pairs().len());
        assert!(votes.iter().all(|v| v.votes.len() == 5));
    }
}
