//! Bursts, pair labels, dataset files, mini-batch sampling, and the
//! planted-oracle generator.

mod io;
mod sampling;
mod synth;
mod types;
mod votes;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::featstore::{read_feature_map, write_feature_map, FeatureError, FeatureMap};

pub use io::{load_dataset, load_manifest, read_pairs_csv, write_manifest, write_pairs_csv, write_votes_csv};
pub use sampling::{sample_minibatch, sample_minibatch_indices};
pub use synth::{synth_generate, synth_votes, SynthConfig, SynthOutput, SyntheticOracle, SHARPNESS_ATTR};
pub use types::{Burst, Frame, LabeledDataset, PairLabel, Split, VoteSet};
pub use votes::{consolidate_votes, simulate_votes};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("pair references unknown burst '{0}'")]
    UnknownBurst(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("missing feature file for {burst_id}/{frame_id}: '{path}'")]
    MissingFeature {
        burst_id: String,
        frame_id: String,
        path: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

/// Feature maps keyed by `(burst_id, frame_id)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureBank {
    maps: BTreeMap<(String, String), FeatureMap>,
}

impl FeatureBank {
    pub fn insert(&mut self, burst_id: &str, frame_id: &str, map: FeatureMap) {
        self.maps.insert((burst_id.to_string(), frame_id.to_string()), map);
    }

    pub fn get(&self, burst_id: &str, frame_id: &str) -> Option<&FeatureMap> {
        // BTreeMap<(String, String)> cannot be queried by borrowed tuples
        self.maps.get(&(burst_id.to_string(), frame_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &FeatureMap)> {
        self.maps.iter()
    }

    /// Reads every frame's feature file, `threads` at a time (0 = all cores).
    pub fn load(ds: &LabeledDataset, threads: usize) -> Result<Self, DatasetError> {
        let jobs: Vec<(String, String, std::path::PathBuf)> = ds
            .bursts()
            .flat_map(|b| {
                b.frames
                    .iter()
                    .map(move |f| (b.burst_id.clone(), f.frame_id.clone(), ds.resolve_ref(f)))
            })
            .collect();
        let read = || {
            jobs.par_iter()
                .map(|(b, f, p)| read_feature_map(p).map(|m| ((b.clone(), f.clone()), m)))
                .collect::<Result<BTreeMap<_, _>, _>>()
        };
        let maps = crate::with_threads(threads, read)?;
        Ok(Self { maps })
    }

    /// Writes each map to its frame's resolved feature reference.
    pub fn save(&self, ds: &LabeledDataset, root: &Path) -> Result<(), DatasetError> {
        for b in ds.bursts() {
            for f in &b.frames {
                let map = self.get(&b.burst_id, &f.frame_id).ok_or_else(|| DatasetError::MissingFeature {
                    burst_id: b.burst_id.clone(),
                    frame_id: f.frame_id.clone(),
                    path: f.feature_ref.clone(),
                })?;
                let path = root.join(&f.feature_ref);
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent).map_err(|source| DatasetError::Io {
                        path: parent.display().to_string(),
                        source,
                    })?;
                }
                write_feature_map(map, &path)?;
            }
        }
        Ok(())
    }
}
