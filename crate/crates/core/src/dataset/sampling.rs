use rand::seq::index;
use rand::Rng;

use super::{DatasetError, LabeledDataset, PairLabel, Split};

/// Indices of `size` training pairs, each from a different burst: bursts
/// are drawn uniformly without replacement among train bursts with at least
/// one pair, then one pair uniformly within each.
pub fn sample_minibatch_indices<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>, DatasetError> {
    let eligible: Vec<&str> = ds
        .bursts_in(Split::Train)
        .map(|b| b.burst_id.as_str())
        .filter(|id| !ds.pair_indices(id).is_empty())
        .collect();
    if eligible.len() < size {
        return Err(DatasetError::Invalid(format!(
            "batch size {size} exceeds the {} train bursts with labeled pairs; lower the batch size",
            eligible.len()
        )));
    }
    let picks = index::sample(rng, eligible.len(), size);
    Ok(picks
        .into_iter()
        .map(|i| {
            let pairs = ds.pair_indices(eligible[i]);
            pairs[rng.random_range(0..pairs.len())]
        })
        .collect())
}

pub fn sample_minibatch<R: Rng + ?Sized>(
    ds: &LabeledDataset,
    size: usize,
    rng: &mut R,
) -> Result<Vec<PairLabel>, DatasetError> {
    Ok(sample_minibatch_indices(ds, size, rng)?
        .into_iter()
        .map(|i| ds.pairs()[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Burst, Frame};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn dataset(n_bursts: usize) -> LabeledDataset {
        let bursts = (0..n_bursts)
            .map(|i| Burst {
                burst_id: format!("b{i:04}"),
                split: if i % 10 == 9 { Split::Val } else { Split::Train },
                frames: (0..3)
                    .map(|j| Frame {
                        frame_id: format!("f{j}"),
                        feature_ref: String::new(),
                    })
                    .collect(),
            })
            .collect();
        let pairs = (0..n_bursts)
            .flat_map(|i| {
                let b = format!("b{i:04}");
                vec![
                    PairLabel::oriented(b.clone(), "f0", "f1", 1),
                    PairLabel::oriented(b.clone(), "f1", "f2", 0),
                    PairLabel::oriented(b, "f2", "f0", 2),
                ]
            })
            .collect();
        LabeledDataset::new(bursts, pairs).unwrap()
    }

    #[test]
    fn distinct_train_bursts() {
        let ds = dataset(100);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let batch = sample_minibatch(&ds, 35, &mut rng).unwrap();
        assert_eq!(batch.len(), 35);
        let ids: HashSet<_> = batch.iter().map(|p| p.burst_id.as_str()).collect();
        assert_eq!(ids.len(), 35);
        assert!(batch.iter().all(|p| ds.split_of(&p.burst_id) == Some(Split::Train)));
    }

    #[test]
    fn full_size_covers_every_burst_once() {
        let ds = dataset(20);
        let n_train = ds.bursts_in(Split::Train).count();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let batch = sample_minibatch(&ds, n_train, &mut rng).unwrap();
        let ids: HashSet<_> = batch.iter().map(|p| p.burst_id.clone()).collect();
        let want: HashSet<_> = ds.bursts_in(Split::Train).map(|b| b.burst_id.clone()).collect();
        assert_eq!(ids, want);
    }

    #[test]
    fn deterministic_given_state() {
        let ds = dataset(50);
        let a = sample_minibatch(&ds, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_minibatch(&ds, 10, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_large_batch_is_an_error() {
        let ds = dataset(10);
        let err = sample_minibatch(&ds, 10, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(err.to_string().contains("lower the batch size"));
    }
}
