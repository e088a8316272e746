use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{generator_loss_and_grads, ranker_loss_and_grads, sample_batch_noise};
use super::{learning_rate, TrainConfig, TrainError};
use crate::dataset::{sample_minibatch, FeatureBank, LabeledDataset, PairLabel, Split};
use crate::evaluation::{pairwise_counts, score_bursts};
use crate::numkernel::{sgd_step, Parameter};
use crate::ranknet::{GeneratorModel, RankerModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    RankerWarmup,
    GWarmup,
    Alternating,
    FinetuneNoG,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::RankerWarmup => "ranker_warmup",
            Phase::GWarmup => "g_warmup",
            Phase::Alternating => "alternating",
            Phase::FinetuneNoG => "finetune_no_g",
        })
    }
}

/// One optimizer step. The loss of the network that was not updated is
/// `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: u64,
    pub phase: Phase,
    pub lr: f64,
    pub loss_ranker: Option<f64>,
    pub loss_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_pairwise: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn in_phase(&self, phase: Phase) -> impl Iterator<Item = &LogRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }
}

/// Models at the end of a phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCheckpoint {
    pub phase: Phase,
    /// Iterations completed when the phase ended.
    pub iter: u64,
    pub ranker: RankerModel,
    pub generator: Option<GeneratorModel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub iteration: u64,
    pub phase: Phase,
    /// Exponential moving averages (factor 0.99) of the two losses.
    pub avg_loss_ranker: Option<f64>,
    pub avg_loss_g: Option<f64>,
}

impl TrainState {
    fn record(&mut self, ranker: Option<f64>, g: Option<f64>) {
        let ema = |avg: &mut Option<f64>, v: f64| *avg = Some(avg.map_or(v, |a| 0.99 * a + 0.01 * v));
        if let Some(v) = ranker {
            ema(&mut self.avg_loss_ranker, v);
        }
        if let Some(v) = g {
            ema(&mut self.avg_loss_g, v);
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub ranker: RankerModel,
    /// Final generator (unused after the fine-tune phase begins).
    pub generator: Option<GeneratorModel>,
    pub log: TrainLog,
    pub checkpoints: Vec<PhaseCheckpoint>,
    pub state: TrainState,
}

/// Iteration ranges of each phase in a run of `total` iterations.
struct Plan {
    ranker_warmup_end: u64,
    g_warmup_end: u64,
    /// Upper bound on the alternating phase; convergence may end it sooner.
    alternate_cap: u64,
    total: u64,
}

impl Plan {
    fn new(cfg: &TrainConfig, epoch: u64) -> Self {
        let total = cfg.total_iters;
        let ranker_warmup_end = (cfg.warmup_ranker_epochs * epoch).min(total);
        if !cfg.gan {
            return Self {
                ranker_warmup_end,
                g_warmup_end: ranker_warmup_end,
                alternate_cap: ranker_warmup_end,
                total,
            };
        }
        let g_warmup_end = (ranker_warmup_end + cfg.warmup_g_epochs * epoch).min(total);
        let alternate_cap = total.saturating_sub(cfg.finetune_iters).max(g_warmup_end);
        Self {
            ranker_warmup_end,
            g_warmup_end,
            alternate_cap,
            total,
        }
    }
}

struct Trainer<'a> {
    ds: &'a LabeledDataset,
    bank: &'a FeatureBank,
    cfg: &'a TrainConfig,
    val_pairs: Vec<PairLabel>,
    rng: ChaCha8Rng,
    ranker: RankerModel,
    g: Option<GeneratorModel>,
    log: TrainLog,
    checkpoints: Vec<PhaseCheckpoint>,
    state: TrainState,
}

fn apply_grads(params: &mut [Parameter], grads: &crate::numkernel::Gradients, lr: f64, cfg: &TrainConfig) -> Result<(), TrainError> {
    for p in params.iter_mut() {
        p.zero_grad();
    }
    grads.accumulate(params)?;
    sgd_step(params, lr, cfg.sgd())?;
    Ok(())
}

impl Trainer<'_> {
    fn validate(&self) -> Result<Option<f64>, TrainError> {
        if self.val_pairs.is_empty() {
            return Ok(None);
        }
        let scores = score_bursts(&self.ranker, self.ds, self.bank, Some(Split::Val), 0)?;
        Ok(pairwise_counts(&scores, &self.val_pairs)?.accuracy())
    }

    fn diverged(&self, iter: u64, phase: Phase, err: TrainError) -> TrainError {
        if !err.is_numeric() {
            return err;
        }
        TrainError::Diverged {
            iter,
            phase,
            reason: err.to_string(),
            last: Box::new((self.ranker.clone(), self.g.clone())),
        }
    }

    /// One optimizer step on the ranker (`update_g == false`) or the
    /// generator. `use_g` selects whether the ranker objective includes the
    /// synthetic terms.
    fn step(&mut self, iter: u64, phase: Phase, update_g: bool, use_g: bool) -> Result<(), TrainError> {
        let lr = learning_rate(iter, self.cfg);
        let batch = sample_minibatch(self.ds, self.cfg.batch_size, &mut self.rng)?;
        let g_in_play = if update_g || use_g { self.g.as_ref() } else { None };
        let noise = match g_in_play {
            Some(g) => sample_batch_noise(g, batch.len(), &mut self.rng),
            None => Vec::new(),
        };
        let (loss_ranker, loss_g) = if update_g {
            let g = self.g.as_ref().ok_or_else(|| TrainError::Config("generator step without a generator".into()))?;
            let (loss, grads) = generator_loss_and_grads(&self.ranker, g, &batch, self.bank, &noise, self.cfg)
                .map_err(|e| self.diverged(iter, phase, e))?;
            let mut next = g.clone();
            apply_grads(next.params_mut(), &grads, lr, self.cfg).map_err(|e| self.diverged(iter, phase, e))?;
            self.g = Some(next);
            (None, Some(loss))
        } else {
            let (loss, grads) = ranker_loss_and_grads(&self.ranker, g_in_play, &batch, self.bank, &noise, self.cfg)
                .map_err(|e| self.diverged(iter, phase, e))?;
            let mut next = self.ranker.clone();
            apply_grads(next.params_mut(), &grads, lr, self.cfg).map_err(|e| self.diverged(iter, phase, e))?;
            self.ranker = next;
            (Some(loss), None)
        };
        self.state.iteration = iter + 1;
        self.state.phase = phase;
        self.state.record(loss_ranker, loss_g);
        let val_pairwise = if self.cfg.eval_every > 0 && (iter + 1).is_multiple_of(self.cfg.eval_every) {
            self.validate()?
        } else {
            None
        };
        self.log.records.push(LogRecord {
            iter,
            phase,
            lr,
            loss_ranker,
            loss_g,
            val_pairwise,
        });
        Ok(())
    }

    fn checkpoint(&mut self, phase: Phase, iter: u64) {
        self.checkpoints.push(PhaseCheckpoint {
            phase,
            iter,
            ranker: self.ranker.clone(),
            generator: self.g.clone(),
        });
    }
}

/// Runs the full schedule: ranker warmup, generator warmup, alternating
/// updates every `alternate_every` iterations until validation stops
/// improving, then ranker-only fine-tuning without the generator. With
/// `gan` off, the ranker trains alone through warmup and fine-tune.
///
/// Deterministic for a given dataset, features and config.
pub fn train(ds: &LabeledDataset, bank: &FeatureBank, cfg: &TrainConfig) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    let train_pairs = ds.pairs_in(Split::Train).count();
    if train_pairs == 0 {
        return Err(TrainError::Config("training split has no labeled pairs".into()));
    }
    let channels = ds
        .bursts()
        .find_map(|b| b.frames.first().and_then(|f| bank.get(&b.burst_id, &f.frame_id)))
        .map(|m| m.channels())
        .ok_or_else(|| TrainError::Config("feature bank is empty".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ranker = RankerModel::new(cfg.head, channels, cfg.attrs, cfg.head_c_order, &mut rng)?;
    let g = if cfg.gan {
        Some(GeneratorModel::new(cfg.attrs, cfg.effective_noise_dim(), &mut rng)?)
    } else {
        None
    };
    let epoch = train_pairs.div_ceil(cfg.batch_size) as u64;
    let plan = Plan::new(cfg, epoch);
    log::info!(
        "training: {train_pairs} train pairs, epoch = {epoch} iterations, ranker warmup to {}, g warmup to {}, alternation up to {}, total {}",
        plan.ranker_warmup_end,
        plan.g_warmup_end,
        plan.alternate_cap,
        plan.total
    );

    let mut t = Trainer {
        ds,
        bank,
        cfg,
        val_pairs: ds.pairs_in(Split::Val).cloned().collect(),
        rng,
        ranker,
        g,
        log: TrainLog::default(),
        checkpoints: Vec::new(),
        state: TrainState {
            iteration: 0,
            phase: Phase::RankerWarmup,
            avg_loss_ranker: None,
            avg_loss_g: None,
        },
    };

    let mut iter = 0;
    while iter < plan.ranker_warmup_end {
        t.step(iter, Phase::RankerWarmup, false, false)?;
        iter += 1;
    }
    if plan.ranker_warmup_end > 0 {
        t.checkpoint(Phase::RankerWarmup, iter);
    }

    if cfg.gan {
        while iter < plan.g_warmup_end {
            t.step(iter, Phase::GWarmup, true, false)?;
            iter += 1;
        }
        if plan.g_warmup_end > plan.ranker_warmup_end {
            t.checkpoint(Phase::GWarmup, iter);
        }

        let start = iter;
        let mut best = f64::NEG_INFINITY;
        let mut stale = 0;
        while iter < plan.alternate_cap {
            let update_g = ((iter - start) / cfg.alternate_every) % 2 == 1;
            t.step(iter, Phase::Alternating, update_g, true)?;
            iter += 1;
            if let Some(acc) = t.log.records.last().and_then(|r| r.val_pairwise) {
                if acc > best {
                    best = acc;
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= cfg.patience {
                        log::info!("validation unimproved for {stale} evaluations at iteration {iter}; fine-tuning");
                        break;
                    }
                }
            }
        }
        if iter > start {
            t.checkpoint(Phase::Alternating, iter);
        }
    }

    let start = iter;
    while iter < plan.total {
        t.step(iter, Phase::FinetuneNoG, false, false)?;
        iter += 1;
    }
    if iter > start {
        t.checkpoint(Phase::FinetuneNoG, iter);
    }

    Ok(TrainOutput {
        ranker: t.ranker,
        generator: t.g,
        log: t.log,
        checkpoints: t.checkpoints,
        state: t.state,
    })
}
