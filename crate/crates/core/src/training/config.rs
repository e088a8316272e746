use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{TrainError, SYNTHETIC_MARGIN};
use crate::numkernel::SgdConfig;
use crate::ranknet::{HeadCOrder, HeadKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_every: u64,
    pub total_iters: u64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lambda_l1: f64,
    pub gamma: f64,
    pub tie_margin: f64,
    pub warmup_ranker_epochs: u64,
    pub warmup_g_epochs: u64,
    pub alternate_every: u64,
    pub synthetic_margin: f64,
    pub seed: u64,
    pub head: HeadKind,
    pub attrs: usize,
    pub head_c_order: HeadCOrder,
    pub gan: bool,
    /// Generator noise size; 0 means "same as attrs".
    pub noise_dim: usize,
    /// Validation cadence in iterations; 0 disables validation.
    pub eval_every: u64,
    /// Evaluations without improvement that end the alternating phase.
    pub patience: usize,
    /// Iterations reserved for the final ranker-only phase.
    pub finetune_iters: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.001,
            lr_drop_factor: 0.1,
            lr_drop_every: 12000,
            total_iters: 100_000,
            batch_size: 35,
            momentum: 0.9,
            weight_decay: 0.0005,
            lambda_l1: 0.1,
            gamma: 1.0,
            tie_margin: 0.05,
            warmup_ranker_epochs: 2,
            warmup_g_epochs: 1,
            alternate_every: 25,
            synthetic_margin: SYNTHETIC_MARGIN,
            seed: 0,
            head: HeadKind::C,
            attrs: 5,
            head_c_order: HeadCOrder::ProjectThenPool,
            gan: false,
            noise_dim: 0,
            eval_every: 500,
            patience: 3,
            finetune_iters: 10_000,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
    value
        .parse()
        .map_err(|_| TrainError::Config(format!("bad value '{value}' for '{key}'")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool, TrainError> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(TrainError::Config(format!("bad value '{value}' for '{key}', expected on/off"))),
    }
}

impl TrainConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        match key {
            "lr0" => self.lr0 = parse(key, value)?,
            "lr_drop_factor" => self.lr_drop_factor = parse(key, value)?,
            "lr_drop_every" => self.lr_drop_every = parse(key, value)?,
            "total_iters" => self.total_iters = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "lambda_l1" => self.lambda_l1 = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "tie_margin" => self.tie_margin = parse(key, value)?,
            "warmup_ranker_epochs" => self.warmup_ranker_epochs = parse(key, value)?,
            "warmup_g_epochs" => self.warmup_g_epochs = parse(key, value)?,
            "alternate_every" => self.alternate_every = parse(key, value)?,
            "synthetic_margin" => self.synthetic_margin = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "head" => self.head = value.parse().map_err(|e: crate::ranknet::ModelError| TrainError::Config(e.to_string()))?,
            "attrs" => self.attrs = parse(key, value)?,
            "head_c_order" => {
                self.head_c_order = value
                    .parse()
                    .map_err(|e: crate::ranknet::ModelError| TrainError::Config(e.to_string()))?
            }
            "gan" => self.gan = parse_switch(key, value)?,
            "noise_dim" => self.noise_dim = parse(key, value)?,
            "eval_every" => self.eval_every = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "finetune_iters" => self.finetune_iters = parse(key, value)?,
            other => return Err(TrainError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies flat `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), TrainError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| TrainError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<Self, TrainError> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: &str| Err(TrainError::Config(msg.into()));
        let positive = [
            ("lr0", self.lr0),
            ("lr_drop_factor", self.lr_drop_factor),
            ("tie_margin", self.tie_margin),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("weight_decay", self.weight_decay), ("lambda_l1", self.lambda_l1), ("gamma", self.gamma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(TrainError::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.lr_drop_every == 0 {
            return bad("lr_drop_every must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.alternate_every == 0 {
            return bad("alternate_every must be at least 1");
        }
        if self.synthetic_margin != SYNTHETIC_MARGIN {
            return bad("synthetic_margin is fixed at 2");
        }
        if self.head == HeadKind::C && self.attrs == 0 {
            return bad("head c needs attrs >= 1");
        }
        if self.gan && self.head != HeadKind::C {
            return bad("the generator works on head c's attribute space; use --head c with --gan on");
        }
        Ok(())
    }

    pub fn effective_noise_dim(&self) -> usize {
        if self.noise_dim == 0 {
            self.attrs
        } else {
            self.noise_dim
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// `lr0 · drop_factor^⌊iter / drop_every⌋`
pub fn learning_rate(iter: u64, cfg: &TrainConfig) -> f64 {
    let drops = (iter / cfg.lr_drop_every.max(1)) as i32;
    cfg.lr0 * cfg.lr_drop_factor.powi(drops)
}
