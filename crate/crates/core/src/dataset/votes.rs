use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetError, PairLabel, VoteSet};

/// Averages the votes and rounds `|mean|` half away from zero.
///
/// The pair is flipped when the mean is negative; a pair whose rounded
/// label is 0 is oriented lexicographically regardless of the mean's sign.
pub fn consolidate_votes(v: &VoteSet) -> Result<PairLabel, DatasetError> {
    if v.votes.is_empty() {
        return Err(DatasetError::Invalid(format!(
            "no votes for pair {}/{}/{}",
            v.burst_id, v.frame_a, v.frame_b
        )));
    }
    if v.frame_a == v.frame_b {
        return Err(DatasetError::Invalid(format!(
            "pair compares frame '{}' with itself",
            v.frame_a
        )));
    }
    if let Some(bad) = v.votes.iter().find(|x| !(-2..=2).contains(*x)) {
        return Err(DatasetError::Invalid(format!("vote {bad} outside [-2, 2]")));
    }
    let n = v.votes.len() as i64;
    let sum: i64 = v.votes.iter().map(|&x| x as i64).sum();
    // round(|sum| / n) with halves going up, in exact integer arithmetic
    let delta = ((2 * sum.abs() + n) / (2 * n)) as i8;
    let signed = if sum < 0 { -delta } else { delta };
    Ok(PairLabel::oriented(v.burst_id.clone(), &v.frame_a, &v.frame_b, signed))
}

/// Simulated annotators: each sees the planted score difference `diff`
/// (positive favours `a`) plus Gaussian noise and answers on the 5-point
/// scale using the oracle thresholds.
pub fn simulate_votes<R: Rng + ?Sized>(
    diff: f64,
    thresholds: (f64, f64),
    n_voters: usize,
    annotator_noise: f64,
    rng: &mut R,
) -> Vec<i8> {
    let noise = Normal::new(0.0, annotator_noise.max(0.0)).expect("finite std-dev");
    (0..n_voters)
        .map(|_| {
            let seen = diff + noise.sample(rng);
            let mag = if seen.abs() < thresholds.0 {
                0
            } else if seen.abs() < thresholds.1 {
                1
            } else {
                2
            };
            if seen < 0.0 {
                -mag
            } else {
                mag
            }
        })
        .collect()
}
