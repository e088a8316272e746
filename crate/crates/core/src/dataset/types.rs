use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DatasetError::Invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: String,
    /// Feature file path, relative to the manifest directory unless absolute.
    pub feature_ref: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub burst_id: String,
    pub split: Split,
    pub frames: Vec<Frame>,
}

impl Burst {
    pub fn frame(&self, frame_id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }
}

/// Raw annotator votes for one pair. Positive means `frame_a` is better;
/// magnitude 1 is "marginally", 2 is "significantly".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteSet {
    pub burst_id: String,
    pub frame_a: String,
    pub frame_b: String,
    pub votes: Vec<i8>,
}

/// Consolidated label, canonically oriented: `better` is the not-worse
/// frame, and ties are ordered lexicographically by frame id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairLabel {
    pub burst_id: String,
    pub better: String,
    pub other: String,
    pub delta_y: u8,
}

impl PairLabel {
    /// Builds a canonically oriented label from an unordered pair and a
    /// signed label (positive: `a` is better).
    pub fn oriented(burst_id: impl Into<String>, a: &str, b: &str, signed: i8) -> Self {
        let (better, other) = if signed > 0 || (signed == 0 && a <= b) { (a, b) } else { (b, a) };
        Self {
            burst_id: burst_id.into(),
            better: better.to_string(),
            other: other.to_string(),
            delta_y: signed.unsigned_abs(),
        }
    }

    pub fn is_tie(&self) -> bool {
        self.delta_y == 0
    }

    pub fn is_canonical(&self) -> bool {
        self.delta_y <= 2 && self.better != self.other && (self.delta_y > 0 || self.better < self.other)
    }
}

/// Bursts, their splits, and consolidated pair labels. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    bursts: BTreeMap<String, Burst>,
    pairs: Vec<PairLabel>,
    base_dir: Option<PathBuf>,
    pairs_by_burst: BTreeMap<String, Vec<usize>>,
}

impl LabeledDataset {
    /// Validates and indexes the dataset.
    pub fn new(bursts: Vec<Burst>, pairs: Vec<PairLabel>) -> Result<Self, DatasetError> {
        let mut map = BTreeMap::new();
        for b in bursts {
            if b.burst_id.is_empty() {
                return Err(DatasetError::Invalid("empty burst_id".into()));
            }
            if b.frames.len() < 2 {
                return Err(DatasetError::Invalid(format!(
                    "burst '{}' has {} frame(s), need at least 2",
                    b.burst_id,
                    b.frames.len()
                )));
            }
            let mut seen = HashSet::new();
            for f in &b.frames {
                if f.frame_id.is_empty() {
                    return Err(DatasetError::Invalid(format!("burst '{}' has an empty frame_id", b.burst_id)));
                }
                if !seen.insert(f.frame_id.as_str()) {
                    return Err(DatasetError::Invalid(format!(
                        "duplicate frame_id '{}' in burst '{}'",
                        f.frame_id, b.burst_id
                    )));
                }
            }
            if map.contains_key(&b.burst_id) {
                return Err(DatasetError::Invalid(format!("duplicate burst_id '{}'", b.burst_id)));
            }
            map.insert(b.burst_id.clone(), b);
        }

        let mut pairs_by_burst: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut seen_pairs = HashSet::new();
        for (i, p) in pairs.iter().enumerate() {
            let burst = map
                .get(&p.burst_id)
                .ok_or_else(|| DatasetError::UnknownBurst(p.burst_id.clone()))?;
            for id in [&p.better, &p.other] {
                if burst.frame(id).is_none() {
                    return Err(DatasetError::Invalid(format!(
                        "pair references unknown frame '{}' in burst '{}'",
                        id, p.burst_id
                    )));
                }
            }
            if !p.is_canonical() {
                return Err(DatasetError::Invalid(format!(
                    "pair {}/{}/{} (delta_y {}) is not canonically oriented",
                    p.burst_id, p.better, p.other, p.delta_y
                )));
            }
            let key = (p.burst_id.as_str(), p.better.as_str().min(&p.other), p.better.as_str().max(&p.other));
            if !seen_pairs.insert(key) {
                return Err(DatasetError::Invalid(format!(
                    "duplicate label for pair {}/{}/{}",
                    p.burst_id, p.better, p.other
                )));
            }
            pairs_by_burst.entry(p.burst_id.clone()).or_default().push(i);
        }
        Ok(Self {
            bursts: map,
            pairs,
            base_dir: None,
            pairs_by_burst,
        })
    }

    pub(crate) fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    /// Replaces the pair list, revalidating against the same bursts.
    pub fn with_pairs(&self, pairs: Vec<PairLabel>) -> Result<Self, DatasetError> {
        let mut ds = Self::new(self.bursts.values().cloned().collect(), pairs)?;
        ds.base_dir = self.base_dir.clone();
        Ok(ds)
    }

    pub fn bursts(&self) -> impl Iterator<Item = &Burst> {
        self.bursts.values()
    }

    pub fn burst(&self, id: &str) -> Option<&Burst> {
        self.bursts.get(id)
    }

    pub fn bursts_in(&self, split: Split) -> impl Iterator<Item = &Burst> {
        self.bursts.values().filter(move |b| b.split == split)
    }

    pub fn num_bursts(&self) -> usize {
        self.bursts.len()
    }

    pub fn pairs(&self) -> &[PairLabel] {
        &self.pairs
    }

    /// Indices into [`pairs`](Self::pairs) for one burst.
    pub fn pair_indices(&self, burst_id: &str) -> &[usize] {
        self.pairs_by_burst.get(burst_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = &PairLabel> {
        self.pairs
            .iter()
            .filter(move |p| self.bursts.get(&p.burst_id).is_some_and(|b| b.split == split))
    }

    pub fn split_of(&self, burst_id: &str) -> Option<Split> {
        self.bursts.get(burst_id).map(|b| b.split)
    }

    /// Fraction of labeled pairs that are ties, or `None` with no pairs.
    pub fn tie_fraction(&self) -> Option<f64> {
        if self.pairs.is_empty() {
            return None;
        }
        Some(self.pairs.iter().filter(|p| p.is_tie()).count() as f64 / self.pairs.len() as f64)
    }

    /// Resolves a frame's feature reference against the manifest directory.
    pub fn resolve_ref(&self, frame: &Frame) -> PathBuf {
        let p = Path::new(&frame.feature_ref);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Lookup table `(burst, unordered pair) → label`.
    pub fn label_index(&self) -> HashMap<(&str, &str, &str), &PairLabel> {
        self.pairs
            .iter()
            .map(|p| {
                let (lo, hi) = if p.better < p.other { (&p.better, &p.other) } else { (&p.other, &p.better) };
                ((p.burst_id.as_str(), lo.as_str(), hi.as_str()), p)
            })
            .collect()
    }
}
