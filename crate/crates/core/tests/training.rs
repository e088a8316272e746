mod common;

use burstrank::dataset::{FeatureBank, PairLabel, Split};
use burstrank::featstore::FeatureMap;
use burstrank::numkernel::Tensor;
use burstrank::ranknet::{GeneratorModel, HeadCOrder, HeadKind, RankerModel};
use burstrank::training::{
    generator_batch_loss, generator_loss_and_grads, learning_rate, pair_rank_loss, ranker_loss_and_grads, train, Phase,
    TrainConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Mini {
    ranker: RankerModel,
    g: GeneratorModel,
    bank: FeatureBank,
    batch: Vec<PairLabel>,
    noise: Vec<Vec<f64>>,
}

fn mini(seed: u64) -> Mini {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranker = RankerModel::new(HeadKind::C, 3, 2, HeadCOrder::default(), &mut rng).unwrap();
    let mut g = GeneratorModel::new(2, 2, &mut rng).unwrap();
    for p in g.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let mut bank = FeatureBank::default();
    let mut batch = Vec::new();
    for i in 0..6 {
        for f in ["a", "b"] {
            let data = (0..12).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            bank.insert(&format!("x{i}"), f, FeatureMap::new(3, 2, 2, data).unwrap());
        }
        batch.push(PairLabel::oriented(format!("x{i}"), "a", "b", (i % 3) as i8));
    }
    let noise = (0..batch.len()).map(|_| g.sample_noise(&mut rng)).collect();
    Mini {
        ranker,
        g,
        bank,
        batch,
        noise,
    }
}

#[test]
fn ranker_step_touches_only_ranker_parameters() {
    let m = mini(1);
    let (_, grads) = ranker_loss_and_grads(&m.ranker, Some(&m.g), &m.batch, &m.bank, &m.noise, &TrainConfig::default()).unwrap();
    let slots: Vec<usize> = grads.param_grads().iter().map(|(s, _)| *s).collect();
    assert!(slots.iter().all(|s| *s < m.ranker.params().len()));
    assert_eq!(slots.len(), m.ranker.params().len());
}

#[test]
fn generator_step_touches_only_generator_parameters() {
    let m = mini(2);
    let (_, grads) = generator_loss_and_grads(&m.ranker, &m.g, &m.batch, &m.bank, &m.noise, &TrainConfig::default()).unwrap();
    assert_eq!(grads.param_grads().len(), m.g.params().len());
}

#[test]
fn generator_loss_ignores_ties_and_is_zero_without_pairs() {
    let m = mini(3);
    let ties: Vec<PairLabel> = m.batch.iter().filter(|p| p.is_tie()).cloned().collect();
    let noise = vec![vec![0.0; 2]; ties.len()];
    assert_eq!(generator_batch_loss(&m.ranker, &m.g, &ties, &m.bank, &noise, &TrainConfig::default()).unwrap(), 0.0);
}

#[test]
fn generator_loss_rejects_other_heads() {
    let mut m = mini(4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    m.ranker = RankerModel::new(HeadKind::B, 3, 0, HeadCOrder::default(), &mut rng).unwrap();
    assert!(generator_batch_loss(&m.ranker, &m.g, &m.batch, &m.bank, &m.noise, &TrainConfig::default()).is_err());
}

proptest! {
    #[test]
    fn generator_loss_nondecreasing_in_lambda(seed in 0u64..200, l1 in 0.0f64..5.0, dl in 0.0f64..5.0) {
        let m = mini(seed);
        let at = |lambda: f64| {
            let cfg = TrainConfig { lambda_l1: lambda, ..TrainConfig::default() };
            generator_batch_loss(&m.ranker, &m.g, &m.batch, &m.bank, &m.noise, &cfg).unwrap()
        };
        prop_assert!(at(l1 + dl) >= at(l1));
    }

    #[test]
    fn pair_loss_is_nonnegative_and_margin_rescaled(fa in -5.0f64..5.0, fb in -5.0f64..5.0, dy in 0u8..=2) {
        let l = pair_rank_loss(fa, fb, dy, 0.05);
        prop_assert!(l >= 0.0);
        if dy > 0 {
            prop_assert_eq!(l, (dy as f64 - (fa - fb)).max(0.0));
        } else {
            prop_assert_eq!(l, ((fa - fb).abs() - 0.05).max(0.0));
        }
    }
}

#[test]
fn step_schedule() {
    let cfg = TrainConfig::default();
    assert_eq!(learning_rate(0, &cfg), cfg.lr0);
    assert_eq!(learning_rate(11_999, &cfg), cfg.lr0);
    assert!((learning_rate(12_000, &cfg) - cfg.lr0 * 0.1).abs() < 1e-18);
    assert!((learning_rate(24_000, &cfg) - cfg.lr0 * 0.01).abs() < 1e-18);
}

fn trailing_mean(xs: &[f64], end: usize, window: usize) -> f64 {
    let lo = end.saturating_sub(window);
    xs[lo..end].iter().sum::<f64>() / (end - lo) as f64
}

#[test]
fn warmup_loss_moving_average_does_not_increase() {
    for seed in 0..3 {
        let out = common::planted_100(seed);
        let cfg = TrainConfig {
            seed,
            total_iters: 10_000,
            gan: true,
            ..TrainConfig::default()
        };
        let warmup_len = out.dataset.pairs_in(Split::Train).count().div_ceil(cfg.batch_size) as u64 * cfg.warmup_ranker_epochs;
        let cfg = TrainConfig {
            total_iters: warmup_len,
            ..cfg
        };
        let res = train(&out.dataset, &out.features, &cfg).unwrap();
        let losses: Vec<f64> = res.log.in_phase(Phase::RankerWarmup).filter_map(|r| r.loss_ranker).collect();
        assert_eq!(losses.len() as u64, warmup_len);
        let mut prev = f64::INFINITY;
        for end in (50..=losses.len()).step_by(50) {
            let ma = trailing_mean(&losses, end, 500);
            assert!(ma <= prev, "seed {seed}: moving average rose to {ma} at {end} (was {prev})");
            prev = ma;
        }
    }
}

#[test]
fn ranker_unchanged_through_generator_warmup_and_generator_unchanged_through_ranker_warmup() {
    let out = common::planted_low_data(3);
    let cfg = TrainConfig {
        gan: true,
        seed: 3,
        batch_size: 10,
        total_iters: 600,
        finetune_iters: 0,
        ..TrainConfig::default()
    };
    let res = train(&out.dataset, &out.features, &cfg).unwrap();
    let ck = |p: Phase| res.checkpoints.iter().find(|c| c.phase == p).unwrap();
    let (rw, gw) = (ck(Phase::RankerWarmup), ck(Phase::GWarmup));
    assert_eq!(rw.ranker, gw.ranker);
    assert_ne!(rw.generator, gw.generator);
    let fc3 = &rw.generator.as_ref().unwrap().params()[4].value;
    assert_eq!(fc3, &Tensor::zeros(fc3.shape()));
}

#[test]
fn identical_seeds_identical_runs() {
    let out = common::planted_low_data(9);
    let cfg = TrainConfig {
        gan: true,
        seed: 9,
        batch_size: 10,
        total_iters: 300,
        finetune_iters: 50,
        ..TrainConfig::default()
    };
    let a = train(&out.dataset, &out.features, &cfg).unwrap();
    let b = train(&out.dataset, &out.features, &cfg).unwrap();
    assert_eq!(a.ranker, b.ranker);
    assert_eq!(a.generator, b.generator);
    assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
    let c = train(&out.dataset, &out.features, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.ranker, c.ranker);
}
