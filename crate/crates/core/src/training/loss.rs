use rand::Rng;

use super::{TrainConfig, TrainError};
use crate::dataset::{FeatureBank, PairLabel};
use crate::numkernel::{Gradients, Tape, Tensor, Var};
use crate::ranknet::{GeneratorModel, HeadKind, ModelError, RankerModel};

/// Margin every pair involving a synthetic feature must satisfy.
pub const SYNTHETIC_MARGIN: f64 = 2.0;

/// Margin-rescaled pair loss: `max(0, Δy − (fa − fb))` for ordered pairs,
/// `max(0, |fa − fb| − tie_margin)` for ties.
pub fn pair_rank_loss(fa: f64, fb: f64, delta_y: u8, tie_margin: f64) -> f64 {
    if delta_y == 0 {
        ((fa - fb).abs() - tie_margin).max(0.0)
    } else {
        (delta_y as f64 - (fa - fb)).max(0.0)
    }
}

pub fn pair_rank_loss_on_tape(tape: &mut Tape, fa: Var, fb: Var, delta_y: u8, tie_margin: f64) -> Result<Var, TrainError> {
    let d = tape.sub(fa, fb)?;
    if delta_y == 0 {
        let a = tape.abs(d)?;
        let neg = tape.scale(a, -1.0)?;
        Ok(tape.hinge(neg, -tie_margin)?)
    } else {
        Ok(tape.hinge(d, delta_y as f64)?)
    }
}

pub(crate) fn feature_tensor(bank: &FeatureBank, burst_id: &str, frame_id: &str) -> Result<Tensor, TrainError> {
    bank.get(burst_id, frame_id)
        .map(|m| m.to_tensor())
        .ok_or_else(|| TrainError::MissingFeature {
            burst_id: burst_id.into(),
            frame_id: frame_id.into(),
        })
}

/// One standard-normal noise vector per pair.
pub fn sample_batch_noise<R: Rng + ?Sized>(g: &GeneratorModel, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| g.sample_noise(rng)).collect()
}

fn require_head_c(ranker: &RankerModel) -> Result<(), TrainError> {
    if ranker.kind() != HeadKind::C {
        return Err(ModelError::WrongHead {
            expected: HeadKind::C,
            found: ranker.kind(),
        }
        .into());
    }
    Ok(())
}

fn check_noise(batch: &[PairLabel], noise: &[Vec<f64>]) -> Result<(), TrainError> {
    if noise.len() != batch.len() {
        return Err(TrainError::Config(format!(
            "{} noise vectors for a batch of {}",
            noise.len(),
            batch.len()
        )));
    }
    Ok(())
}

/// Ranker objective on `tape`, ranker parameters bound trainable (slot =
/// parameter index).
///
/// Per pair: `R(A⪰B, Δy)`; with a generator and a non-tie pair, also
/// `R(B′⪰B, 2) + γ·R(A⪰B′, 2)` where `x′_B = x_B + G(x_B, z)`. The
/// generator is bound as constants. Mean over the batch.
pub fn ranker_loss_on_tape(
    tape: &mut Tape,
    ranker: &RankerModel,
    g: Option<&GeneratorModel>,
    batch: &[PairLabel],
    bank: &FeatureBank,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<Var, TrainError> {
    if g.is_some() {
        require_head_c(ranker)?;
        check_noise(batch, noise)?;
    }
    let r = ranker.bind(tape, true)?;
    let gb = g.map(|g| g.bind(tape, false)).transpose()?;
    let mut terms = Vec::with_capacity(batch.len() * 3);
    for (i, p) in batch.iter().enumerate() {
        let a = tape.constant(feature_tensor(bank, &p.burst_id, &p.better)?)?;
        let b = tape.constant(feature_tensor(bank, &p.burst_id, &p.other)?)?;
        let fa = r.score(tape, a)?;
        match (&gb, p.is_tie()) {
            (Some(gb), false) => {
                let xb = r.attributes(tape, b)?;
                let fb = r.score_attributes(tape, xb)?;
                terms.push(pair_rank_loss_on_tape(tape, fa, fb, p.delta_y, cfg.tie_margin)?);
                let e = gb.residual(tape, xb, &noise[i])?;
                let xb2 = tape.add(xb, e)?;
                let fb2 = r.score_attributes(tape, xb2)?;
                let up = tape.sub(fb2, fb)?;
                terms.push(tape.hinge(up, SYNTHETIC_MARGIN)?);
                if cfg.gamma != 0.0 {
                    let gap = tape.sub(fa, fb2)?;
                    let t = tape.hinge(gap, SYNTHETIC_MARGIN)?;
                    terms.push(tape.scale(t, cfg.gamma)?);
                }
            }
            _ => {
                let fb = r.score(tape, b)?;
                terms.push(pair_rank_loss_on_tape(tape, fa, fb, p.delta_y, cfg.tie_margin)?);
            }
        }
    }
    let total = tape.add_all(&terms)?;
    Ok(tape.scale(total, 1.0 / batch.len().max(1) as f64)?)
}

pub fn ranker_batch_loss(
    ranker: &RankerModel,
    g: Option<&GeneratorModel>,
    batch: &[PairLabel],
    bank: &FeatureBank,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let loss = ranker_loss_on_tape(&mut tape, ranker, g, batch, bank, noise, cfg)?;
    Ok(tape.scalar(loss))
}

/// Loss value and gradients for the ranker's parameters.
pub fn ranker_loss_and_grads(
    ranker: &RankerModel,
    g: Option<&GeneratorModel>,
    batch: &[PairLabel],
    bank: &FeatureBank,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(f64, Gradients), TrainError> {
    let mut tape = Tape::new();
    let loss = ranker_loss_on_tape(&mut tape, ranker, g, batch, bank, noise, cfg)?;
    Ok((tape.scalar(loss), tape.backward(loss)?))
}

/// Generator objective on `tape`, generator parameters bound trainable.
///
/// Per non-tie pair: `hinge(2 − (f(x′_B) − f(x_A))) + λ‖e‖₁` with the
/// ranker held constant. Mean over the non-tie pairs (0 if there are none).
pub fn generator_loss_on_tape(
    tape: &mut Tape,
    ranker: &RankerModel,
    g: &GeneratorModel,
    batch: &[PairLabel],
    bank: &FeatureBank,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<Var, TrainError> {
    require_head_c(ranker)?;
    check_noise(batch, noise)?;
    let r = ranker.bind(tape, false)?;
    let gb = g.bind(tape, true)?;
    let mut terms = Vec::with_capacity(batch.len());
    for (i, p) in batch.iter().enumerate().filter(|(_, p)| !p.is_tie()) {
        let a = bank.get(&p.burst_id, &p.better).ok_or_else(|| TrainError::MissingFeature {
            burst_id: p.burst_id.clone(),
            frame_id: p.better.clone(),
        })?;
        let b = bank.get(&p.burst_id, &p.other).ok_or_else(|| TrainError::MissingFeature {
            burst_id: p.burst_id.clone(),
            frame_id: p.other.clone(),
        })?;
        let fa = tape.constant(Tensor::scalar(ranker.score(a)?))?;
        let xb = tape.constant(Tensor::vector(ranker.attribute_vector(b)?))?;
        let e = gb.residual(tape, xb, &noise[i])?;
        let xb2 = tape.add(xb, e)?;
        let fb2 = r.score_attributes(tape, xb2)?;
        let gap = tape.sub(fb2, fa)?;
        let adv = tape.hinge(gap, SYNTHETIC_MARGIN)?;
        let abs = tape.abs(e)?;
        let l1 = tape.sum(abs)?;
        let pen = tape.scale(l1, cfg.lambda_l1)?;
        terms.push(tape.add(adv, pen)?);
    }
    let n = terms.len();
    let total = tape.add_all(&terms)?;
    Ok(tape.scale(total, 1.0 / n.max(1) as f64)?)
}

pub fn generator_batch_loss(
    ranker: &RankerModel,
    g: &GeneratorModel,
    batch: &[PairLabel],
    bank: &FeatureBank,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let mut tape = Tape::new();
    let loss = generator_loss_on_tape(&mut tape, ranker, g, batch, bank, noise, cfg)?;
    Ok(tape.scalar(loss))
}

pub fn generator_loss_and_grads(
    ranker: &RankerModel,
    g: &GeneratorModel,
    batch: &[PairLabel],
    bank: &FeatureBank,
    noise: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<(f64, Gradients), TrainError> {
    let mut tape = Tape::new();
    let loss = generator_loss_on_tape(&mut tape, ranker, g, batch, bank, noise, cfg)?;
    Ok((tape.scalar(loss), tape.backward(loss)?))
}
