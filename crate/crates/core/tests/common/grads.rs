//! Finite-difference checks for every tape primitive and every loss.

use burstrank::dataset::{FeatureBank, PairLabel};
use burstrank::featstore::FeatureMap;
use burstrank::numkernel::{grad_check, uniform_fan_in, KernelError, Parameter, Tape, Tensor, Var};
use burstrank::ranknet::{GeneratorModel, HeadCOrder, HeadKind, RankerModel};
use burstrank::training::{generator_loss_on_tape, pair_rank_loss_on_tape, ranker_loss_on_tape, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-4;
pub const TOL: f64 = 1e-4;
/// Minimum distance of any kink argument from its kink for a seed to count.
pub const CLEARANCE: f64 = 1e-3;

pub type Build = Box<dyn Fn(&[Parameter]) -> Result<(Tape, Var), KernelError>>;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: String,
    pub seeds: usize,
    pub rejected: usize,
    pub max_rel_error: f64,
}

impl CaseResult {
    pub fn passed(&self, min_seeds: usize) -> bool {
        self.seeds >= min_seeds && self.max_rel_error < TOL
    }
}

fn train_err(e: impl std::fmt::Display) -> KernelError {
    KernelError::NumericFault(e.to_string())
}

fn slot_grads(tape: &Tape, loss: Var, n: usize, params: &[Parameter]) -> Result<Vec<Tensor>, KernelError> {
    let grads = tape.backward(loss)?;
    let mut out: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    for (slot, g) in grads.param_grads() {
        out[*slot] = g.clone();
    }
    debug_assert_eq!(out.len(), n);
    Ok(out)
}

/// Runs `make(seed)` until `seeds` inputs clear every kink, checking each.
pub fn run_case(name: &str, seeds: usize, make: impl Fn(u64) -> (Vec<Parameter>, Build)) -> CaseResult {
    let mut res = CaseResult {
        name: name.into(),
        seeds: 0,
        rejected: 0,
        max_rel_error: 0.0,
    };
    let mut seed = 0u64;
    while res.seeds < seeds && seed < (seeds as u64) * 20 {
        let (mut params, build) = make(seed);
        seed += 1;
        let (tape, _) = build(&params).expect("forward pass");
        if tape.kink_clearance() < CLEARANCE {
            res.rejected += 1;
            continue;
        }
        let n = params.len();
        let report = grad_check(&mut params, EPS, TOL, |ps| {
            let (tape, loss) = build(ps)?;
            let grads = slot_grads(&tape, loss, n, ps)?;
            Ok((tape.scalar(loss), grads))
        })
        .expect("gradient check");
        res.max_rel_error = res.max_rel_error.max(report.max_rel_error);
        res.seeds += 1;
    }
    res
}

fn rand_param(rng: &mut ChaCha8Rng, name: &str, shape: &[usize]) -> Parameter {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Parameter::new(name, Tensor::new(shape.to_vec(), data).unwrap())
}

/// Reduces any tensor to a scalar with fixed random weights so that every
/// output entry gets a distinct upstream gradient.
fn readout(tape: &mut Tape, x: Var, seed: u64) -> Result<Var, KernelError> {
    let shape = tape.value(x).shape().to_vec();
    let flat = if shape.len() == 3 {
        tape.global_avg_pool(x)?
    } else {
        x
    };
    let n = tape.value(flat).len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead_beef);
    let w = tape.constant(Tensor::new(vec![1, n], (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?)?;
    let b = tape.constant(Tensor::zeros(&[1]))?;
    tape.dense(flat, w, b)
}

type CaseFn = Box<dyn Fn(u64) -> (Vec<Parameter>, Build)>;

fn primitive_cases() -> Vec<(&'static str, CaseFn)> {
    vec![
        (
            "pointwise_conv",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![
                    rand_param(&mut rng, "x", &[3, 2, 2]),
                    rand_param(&mut rng, "w", &[2, 3]),
                    rand_param(&mut rng, "b", &[2]),
                ];
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let x = t.param(0, &ps[0])?;
                    let w = t.param(1, &ps[1])?;
                    let b = t.param(2, &ps[2])?;
                    let y = t.pointwise_conv(x, w, b)?;
                    let l = readout(&mut t, y, seed)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "relu",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![rand_param(&mut rng, "x", &[2, 2, 2])];
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let x = t.param(0, &ps[0])?;
                    let y = t.relu(x)?;
                    let l = readout(&mut t, y, seed)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "global_avg_pool",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![rand_param(&mut rng, "x", &[3, 2, 3])];
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let x = t.param(0, &ps[0])?;
                    let y = t.global_avg_pool(x)?;
                    let l = readout(&mut t, y, seed)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "dense",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![
                    rand_param(&mut rng, "x", &[4]),
                    rand_param(&mut rng, "w", &[3, 4]),
                    rand_param(&mut rng, "b", &[3]),
                ];
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let x = t.param(0, &ps[0])?;
                    let w = t.param(1, &ps[1])?;
                    let b = t.param(2, &ps[2])?;
                    let y = t.dense(x, w, b)?;
                    let l = readout(&mut t, y, seed)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "add_sub_scale_sum",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![rand_param(&mut rng, "a", &[4]), rand_param(&mut rng, "b", &[4])];
                let k = rng.random_range(-2.0..2.0);
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let a = t.param(0, &ps[0])?;
                    let b = t.param(1, &ps[1])?;
                    let s = t.add(a, b)?;
                    let d = t.sub(s, b)?;
                    let d = t.sub(d, b)?;
                    let y = t.scale(d, k)?;
                    let r = readout(&mut t, y, seed)?;
                    let total = t.sum(b)?;
                    let l = t.add_all(&[r, total])?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "abs",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![rand_param(&mut rng, "x", &[5])];
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let x = t.param(0, &ps[0])?;
                    let y = t.abs(x)?;
                    let l = readout(&mut t, y, seed)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "hinge",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![rand_param(&mut rng, "x", &[1])];
                let margin = rng.random_range(-1.0..1.0);
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let x = t.param(0, &ps[0])?;
                    let l = t.hinge(x, margin)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
        (
            "concat",
            Box::new(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ps = vec![rand_param(&mut rng, "a", &[2]), rand_param(&mut rng, "b", &[3])];
                let build: Build = Box::new(move |ps: &[Parameter]| {
                    let mut t = Tape::new();
                    let a = t.param(0, &ps[0])?;
                    let b = t.param(1, &ps[1])?;
                    let y = t.concat(a, b)?;
                    let l = readout(&mut t, y, seed)?;
                    Ok((t, l))
                });
                (ps, build)
            }),
        ),
    ]
}

const C: usize = 3;
const ATTRS: usize = 2;

/// Three-pair mini batch (Δy = 2, 1, 0) over random 3×2×2 maps.
fn mini_batch(rng: &mut ChaCha8Rng) -> (Vec<PairLabel>, FeatureBank) {
    let mut bank = FeatureBank::default();
    for f in ["f0", "f1", "f2", "f3"] {
        let data: Vec<f32> = (0..C * 4).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        bank.insert("b", f, FeatureMap::new(C, 2, 2, data).unwrap());
    }
    let batch = vec![
        PairLabel::oriented("b", "f0", "f1", 2),
        PairLabel::oriented("b", "f2", "f3", 1),
        PairLabel::oriented("b", "f1", "f2", 0),
    ];
    (batch, bank)
}

fn mini_generator(rng: &mut ChaCha8Rng) -> GeneratorModel {
    let mut g = GeneratorModel::new(ATTRS, ATTRS, rng).unwrap();
    let h = g.hidden();
    let w = uniform_fan_in(rng, &[ATTRS, h], h);
    g.params_mut()[4].value = w;
    let b = Tensor::vector((0..ATTRS).map(|_| rng.random_range(-0.5..0.5)).collect());
    g.params_mut()[5].value = b;
    g
}

fn with_values<M: Clone>(base: &M, ps: &[Parameter], params_mut: impl Fn(&mut M) -> &mut [Parameter]) -> M {
    let mut m = base.clone();
    for (d, s) in params_mut(&mut m).iter_mut().zip(ps) {
        d.value = s.value.clone();
    }
    m
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..ATTRS).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
}

fn ranker_case(kind: HeadKind, order: HeadCOrder, with_g: bool, gamma: f64) -> CaseFn {
    Box::new(move |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranker = RankerModel::new(kind, C, ATTRS, order, &mut rng).unwrap();
        let g = with_g.then(|| mini_generator(&mut rng));
        let (batch, bank) = mini_batch(&mut rng);
        let z = noise(&mut rng, batch.len());
        let cfg = TrainConfig {
            gamma,
            tie_margin: 0.05,
            ..TrainConfig::default()
        };
        let ps = ranker.params().to_vec();
        let build: Build = Box::new(move |ps: &[Parameter]| {
            let m = with_values(&ranker, ps, |m| m.params_mut());
            let mut t = Tape::new();
            let l = ranker_loss_on_tape(&mut t, &m, g.as_ref(), &batch, &bank, &z, &cfg).map_err(train_err)?;
            Ok((t, l))
        });
        (ps, build)
    })
}

fn generator_case(lambda: f64) -> CaseFn {
    Box::new(move |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranker = RankerModel::new(HeadKind::C, C, ATTRS, HeadCOrder::default(), &mut rng).unwrap();
        let g = mini_generator(&mut rng);
        let (batch, bank) = mini_batch(&mut rng);
        let z = noise(&mut rng, batch.len());
        let cfg = TrainConfig {
            lambda_l1: lambda,
            ..TrainConfig::default()
        };
        let ps = g.params().to_vec();
        let build: Build = Box::new(move |ps: &[Parameter]| {
            let gm = with_values(&g, ps, |m| m.params_mut());
            let mut t = Tape::new();
            let l = generator_loss_on_tape(&mut t, &ranker, &gm, &batch, &bank, &z, &cfg).map_err(train_err)?;
            Ok((t, l))
        });
        (ps, build)
    })
}

fn pair_loss_case(delta_y: u8) -> CaseFn {
    Box::new(move |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ps = vec![rand_param(&mut rng, "fa", &[1]), rand_param(&mut rng, "fb", &[1])];
        let build: Build = Box::new(move |ps: &[Parameter]| {
            let mut t = Tape::new();
            let a = t.param(0, &ps[0])?;
            let b = t.param(1, &ps[1])?;
            let l = pair_rank_loss_on_tape(&mut t, a, b, delta_y, 0.2).map_err(train_err)?;
            Ok((t, l))
        });
        (ps, build)
    })
}

/// Every primitive and loss, each on `seeds` accepted random inputs.
pub fn gradient_suite(seeds: usize) -> Vec<CaseResult> {
    let mut cases: Vec<(String, CaseFn)> = primitive_cases()
        .into_iter()
        .map(|(n, f)| (format!("primitive/{n}"), f))
        .collect();
    for dy in 0..=2u8 {
        cases.push((format!("pair_rank_loss/dy={dy}"), pair_loss_case(dy)));
    }
    for (label, kind, order) in [
        ("a", HeadKind::A, HeadCOrder::ProjectThenPool),
        ("b", HeadKind::B, HeadCOrder::ProjectThenPool),
        ("c", HeadKind::C, HeadCOrder::ProjectThenPool),
        ("c_pool_first", HeadKind::C, HeadCOrder::PoolThenProject),
    ] {
        cases.push((format!("ranker_batch_loss/head_{label}"), ranker_case(kind, order, false, 1.0)));
    }
    cases.push(("ranker_batch_loss/head_c+g".into(), ranker_case(HeadKind::C, HeadCOrder::ProjectThenPool, true, 1.0)));
    cases.push((
        "ranker_batch_loss/head_c+g_pool_first".into(),
        ranker_case(HeadKind::C, HeadCOrder::PoolThenProject, true, 1.0),
    ));
    cases.push(("ranker_batch_loss/head_c+g_gamma0".into(), ranker_case(HeadKind::C, HeadCOrder::ProjectThenPool, true, 0.0)));
    cases.push(("generator_batch_loss/lambda=0.1".into(), generator_case(0.1)));
    cases.push(("generator_batch_loss/lambda=10".into(), generator_case(10.0)));
    cases.into_iter().map(|(name, f)| run_case(&name, seeds, f)).collect()
}
