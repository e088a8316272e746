use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;
use crate::dataset::{FeatureBank, PairLabel};
use crate::ranknet::{GeneratorModel, RankerModel};

/// How the generator's synthetic frames fare against the real better frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversarialStats {
    /// Fraction of non-tie pairs with `f(x′_B) > f(x_A)`.
    pub win_fraction: f64,
    /// Mean `‖e‖₁` over the same pairs.
    pub mean_residual_l1: f64,
    pub pairs: usize,
}

/// Evaluates `g` on every non-tie pair, drawing noise from `noise_seed`.
pub fn adversarial_stats(
    ranker: &RankerModel,
    g: &GeneratorModel,
    pairs: &[PairLabel],
    bank: &FeatureBank,
    noise_seed: u64,
) -> Result<AdversarialStats, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let (mut wins, mut l1, mut n) = (0usize, 0.0, 0usize);
    for p in pairs.iter().filter(|p| !p.is_tie()) {
        let get = |frame: &str| {
            bank.get(&p.burst_id, frame).ok_or_else(|| TrainError::MissingFeature {
                burst_id: p.burst_id.clone(),
                frame_id: frame.into(),
            })
        };
        let fa = ranker.score(get(&p.better)?)?;
        let xb = ranker.attribute_vector(get(&p.other)?)?;
        let z = g.sample_noise(&mut rng);
        let e = g.generate_residual(&xb, &z)?;
        let xb2: Vec<f64> = xb.iter().zip(&e).map(|(x, d)| x + d).collect();
        if ranker.score_attributes(&xb2)? > fa {
            wins += 1;
        }
        l1 += e.iter().map(|v| v.abs()).sum::<f64>();
        n += 1;
    }
    let denom = n.max(1) as f64;
    Ok(AdversarialStats {
        win_fraction: wins as f64 / denom,
        mean_residual_l1: l1 / denom,
        pairs: n,
    })
}
