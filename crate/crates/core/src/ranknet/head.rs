use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::featstore::FeatureMap;
use crate::numkernel::{kernels, uniform_fan_in, Parameter, Tape, Tensor, Var};

/// Scoring head variant.
///
/// * `A`: 1×1 conv to one map, then global average pool.
/// * `B`: global average pool, then a dense layer to one score.
/// * `C`: 1×1 projection to C′ attribute maps with ReLU, pooled to the
///   attribute vector `x`, then a linear scorer `W·x + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    A,
    B,
    C,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::A => "a",
            HeadKind::B => "b",
            HeadKind::C => "c",
        })
    }
}

impl FromStr for HeadKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(HeadKind::A),
            "b" => Ok(HeadKind::B),
            "c" => Ok(HeadKind::C),
            other => Err(ModelError::Config(format!("unknown head kind '{other}'"))),
        }
    }
}

/// Where head C applies its projection relative to pooling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadCOrder {
    /// `x = pool(relu(conv(f)))`
    #[default]
    ProjectThenPool,
    /// `x = relu(dense(pool(f)))`
    PoolThenProject,
}

impl FromStr for HeadCOrder {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "project_then_pool" => Ok(HeadCOrder::ProjectThenPool),
            "pool_then_project" => Ok(HeadCOrder::PoolThenProject),
            other => Err(ModelError::Config(format!("unknown head-C order '{other}'"))),
        }
    }
}

// head C parameter slots
const PROJ_W: usize = 0;
const PROJ_B: usize = 1;
const SCORE_W_C: usize = 2;
const SCORE_B_C: usize = 3;
// head A/B parameter slots
const SCORE_W: usize = 0;
const SCORE_B: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RankerModel {
    kind: HeadKind,
    channels: usize,
    attrs: usize,
    order: HeadCOrder,
    params: Vec<Parameter>,
}

impl RankerModel {
    /// Fan-in uniform weights, zero biases. `attrs` is ignored (stored as 0)
    /// for heads A and B.
    pub fn new<R: Rng + ?Sized>(
        kind: HeadKind,
        channels: usize,
        attrs: usize,
        order: HeadCOrder,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if channels == 0 {
            return Err(ModelError::Config("head needs at least one input channel".into()));
        }
        let params = match kind {
            HeadKind::A | HeadKind::B => vec![
                Parameter::new("score.weight", uniform_fan_in(rng, &[1, channels], channels)),
                Parameter::new("score.bias", Tensor::zeros(&[1])),
            ],
            HeadKind::C => {
                if attrs == 0 {
                    return Err(ModelError::Config("head C needs C′ ≥ 1".into()));
                }
                vec![
                    Parameter::new("proj.weight", uniform_fan_in(rng, &[attrs, channels], channels)),
                    Parameter::new("proj.bias", Tensor::zeros(&[attrs])),
                    Parameter::new("score.weight", uniform_fan_in(rng, &[1, attrs], attrs)),
                    Parameter::new("score.bias", Tensor::zeros(&[1])),
                ]
            }
        };
        Ok(Self {
            kind,
            channels,
            attrs: if kind == HeadKind::C { attrs } else { 0 },
            order,
            params,
        })
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn attrs(&self) -> usize {
        self.attrs
    }

    pub fn order(&self) -> HeadCOrder {
        self.order
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    fn param_mut(&mut self, name: &str) -> &mut Parameter {
        self.params.iter_mut().find(|p| p.name == name).expect("known parameter name")
    }

    /// Overwrites the scoring layer (`1×n` weight, scalar bias).
    pub fn set_scoring(&mut self, weight: &[f64], bias: f64) -> Result<(), ModelError> {
        let n = self.param_mut("score.weight").value.len();
        if weight.len() != n {
            return Err(ModelError::Config(format!("scoring weight needs {n} entries, got {}", weight.len())));
        }
        self.param_mut("score.weight").value = Tensor::new(vec![1, n], weight.to_vec())?;
        self.param_mut("score.bias").value = Tensor::scalar(bias);
        Ok(())
    }

    /// Overwrites head C's projection (`C′×C` row-major weight, `C′` bias).
    pub fn set_projection(&mut self, weight: &[f64], bias: &[f64]) -> Result<(), ModelError> {
        self.require_c()?;
        let (k, c) = (self.attrs, self.channels);
        self.param_mut("proj.weight").value = Tensor::new(vec![k, c], weight.to_vec())?;
        self.param_mut("proj.bias").value = Tensor::new(vec![k], bias.to_vec())?;
        Ok(())
    }

    fn require_c(&self) -> Result<(), ModelError> {
        if self.kind != HeadKind::C {
            return Err(ModelError::WrongHead {
                expected: HeadKind::C,
                found: self.kind,
            });
        }
        Ok(())
    }

    fn check_input(&self, f: &FeatureMap) -> Result<(), ModelError> {
        if f.channels() != self.channels {
            return Err(ModelError::ChannelMismatch {
                expected: self.channels,
                found: f.channels(),
            });
        }
        Ok(())
    }

    /// Goodness score of one frame.
    pub fn score(&self, f: &FeatureMap) -> Result<f64, ModelError> {
        self.check_input(f)?;
        self.score_tensor(&f.to_tensor())
    }

    pub fn score_tensor(&self, x: &Tensor) -> Result<f64, ModelError> {
        let p = |i: usize| &self.params[i].value;
        let out = match self.kind {
            HeadKind::A => kernels::global_avg_pool(&kernels::pointwise_conv(x, p(SCORE_W), p(SCORE_B))?)?,
            HeadKind::B => kernels::dense(&kernels::global_avg_pool(x)?, p(SCORE_W), p(SCORE_B))?,
            HeadKind::C => {
                let attrs = self.attributes_tensor(x)?;
                kernels::dense(&attrs, p(SCORE_W_C), p(SCORE_B_C))?
            }
        };
        let s = out.item();
        if !s.is_finite() {
            return Err(ModelError::Kernel(crate::numkernel::KernelError::NumericFault(
                "non-finite score".into(),
            )));
        }
        Ok(s)
    }

    fn attributes_tensor(&self, x: &Tensor) -> Result<Tensor, ModelError> {
        let (w, b) = (&self.params[PROJ_W].value, &self.params[PROJ_B].value);
        Ok(match self.order {
            HeadCOrder::ProjectThenPool => kernels::global_avg_pool(&kernels::relu(&kernels::pointwise_conv(x, w, b)?))?,
            HeadCOrder::PoolThenProject => kernels::relu(&kernels::dense(&kernels::global_avg_pool(x)?, w, b)?),
        })
    }

    /// Head C's latent attribute vector `x` (non-negative).
    pub fn attribute_vector(&self, f: &FeatureMap) -> Result<Vec<f64>, ModelError> {
        self.require_c()?;
        self.check_input(f)?;
        Ok(self.attributes_tensor(&f.to_tensor())?.into_data())
    }

    /// `W·x + b` for a head-C attribute vector.
    pub fn score_attributes(&self, x: &[f64]) -> Result<f64, ModelError> {
        self.require_c()?;
        if x.len() != self.attrs {
            return Err(ModelError::Config(format!(
                "attribute vector has {} entries, expected {}",
                x.len(),
                self.attrs
            )));
        }
        let out = kernels::dense(
            &Tensor::vector(x.to_vec()),
            &self.params[SCORE_W_C].value,
            &self.params[SCORE_B_C].value,
        )?;
        Ok(out.item())
    }

    /// Scores every map; equal to per-frame [`score`](Self::score).
    pub fn score_batch(&self, maps: &[&FeatureMap]) -> Result<Vec<f64>, ModelError> {
        maps.iter().map(|m| self.score(m)).collect()
    }

    /// Multiply-accumulate count of one forward pass on a `C×H×W` map.
    pub fn mac_count(&self, height: usize, width: usize) -> u64 {
        let (c, k, plane) = (self.channels as u64, self.attrs as u64, (height * width) as u64);
        match self.kind {
            HeadKind::A => c * plane + plane,
            HeadKind::B => c * plane + c,
            HeadKind::C => match self.order {
                HeadCOrder::ProjectThenPool => k * c * plane + k * plane + k,
                HeadCOrder::PoolThenProject => c * plane + k * c + k,
            },
        }
    }

    /// Records the parameters on `tape`, trainable (slot = parameter index)
    /// or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundRanker, ModelError> {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| if trainable { tape.param(i, p) } else { tape.constant(p.value.clone()) })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundRanker {
            kind: self.kind,
            order: self.order,
            vars,
        })
    }
}

/// A ranker's parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundRanker {
    kind: HeadKind,
    order: HeadCOrder,
    vars: Vec<Var>,
}

impl BoundRanker {
    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn score(&self, tape: &mut Tape, input: Var) -> Result<Var, ModelError> {
        let v = &self.vars;
        Ok(match self.kind {
            HeadKind::A => {
                let m = tape.pointwise_conv(input, v[SCORE_W], v[SCORE_B])?;
                tape.global_avg_pool(m)?
            }
            HeadKind::B => {
                let pooled = tape.global_avg_pool(input)?;
                tape.dense(pooled, v[SCORE_W], v[SCORE_B])?
            }
            HeadKind::C => {
                let x = self.attributes(tape, input)?;
                self.score_attributes(tape, x)?
            }
        })
    }

    pub fn attributes(&self, tape: &mut Tape, input: Var) -> Result<Var, ModelError> {
        if self.kind != HeadKind::C {
            return Err(ModelError::WrongHead {
                expected: HeadKind::C,
                found: self.kind,
            });
        }
        let v = &self.vars;
        Ok(match self.order {
            HeadCOrder::ProjectThenPool => {
                let proj = tape.pointwise_conv(input, v[PROJ_W], v[PROJ_B])?;
                let act = tape.relu(proj)?;
                tape.global_avg_pool(act)?
            }
            HeadCOrder::PoolThenProject => {
                let pooled = tape.global_avg_pool(input)?;
                let proj = tape.dense(pooled, v[PROJ_W], v[PROJ_B])?;
                tape.relu(proj)?
            }
        })
    }

    pub fn score_attributes(&self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        if self.kind != HeadKind::C {
            return Err(ModelError::WrongHead {
                expected: HeadKind::C,
                found: self.kind,
            });
        }
        Ok(tape.dense(x, self.vars[SCORE_W_C], self.vars[SCORE_B_C])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        let data: Vec<f32> = (0..c * h * w).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        FeatureMap::new(c, h, w, data).unwrap()
    }

    #[test]
    fn heads_a_and_b_agree_with_tied_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = RankerModel::new(HeadKind::A, 6, 0, HeadCOrder::default(), &mut rng).unwrap();
        let mut b = RankerModel::new(HeadKind::B, 6, 0, HeadCOrder::default(), &mut rng).unwrap();
        let w: Vec<f64> = (0..6).map(|i| i as f64 * 0.3 - 0.8).collect();
        a.set_scoring(&w, 0.0).unwrap();
        b.set_scoring(&w, 0.0).unwrap();
        for _ in 0..20 {
            let m = random_map(&mut rng, 6, 5, 3);
            assert!((a.score(&m).unwrap() - b.score(&m).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_head_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = RankerModel::new(HeadKind::C, 4, 3, HeadCOrder::default(), &mut rng).unwrap();
        m.set_scoring(&[0.0; 3], 3.0).unwrap();
        for _ in 0..5 {
            assert_eq!(m.score(&random_map(&mut rng, 4, 2, 2)).unwrap(), 3.0);
        }
    }

    #[test]
    fn channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = RankerModel::new(HeadKind::B, 4, 0, HeadCOrder::default(), &mut rng).unwrap();
        let err = m.score(&random_map(&mut rng, 3, 2, 2)).unwrap_err();
        assert!(matches!(err, ModelError::ChannelMismatch { expected: 4, found: 3 }));
    }

    #[test]
    fn attribute_vector_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = RankerModel::new(HeadKind::C, 4, 5, HeadCOrder::default(), &mut rng).unwrap();
        let zero = FeatureMap::new(4, 2, 2, vec![0.0; 16]).unwrap();
        assert_eq!(m.attribute_vector(&zero).unwrap(), vec![0.0; 5]);
        assert_eq!(m.score_attributes(&[0.0; 5]).unwrap(), 0.0);
        for _ in 0..10 {
            let f = random_map(&mut rng, 4, 3, 3);
            let x = m.attribute_vector(&f).unwrap();
            assert!(x.iter().all(|v| *v >= 0.0));
            assert_eq!(m.score(&f).unwrap(), m.score_attributes(&x).unwrap());
        }
        let b = RankerModel::new(HeadKind::B, 4, 0, HeadCOrder::default(), &mut rng).unwrap();
        assert!(matches!(b.attribute_vector(&zero), Err(ModelError::WrongHead { .. })));
        assert!(b.score_attributes(&[0.0]).is_err());
    }

    #[test]
    fn score_difference_is_linear_in_attribute_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = RankerModel::new(HeadKind::C, 4, 3, HeadCOrder::default(), &mut rng).unwrap();
        m.set_scoring(&[0.5, -1.25, 2.0], 0.7).unwrap();
        let (fa, fb) = (random_map(&mut rng, 4, 2, 2), random_map(&mut rng, 4, 2, 2));
        let (xa, xb) = (m.attribute_vector(&fa).unwrap(), m.attribute_vector(&fb).unwrap());
        let via_w: f64 = [0.5, -1.25, 2.0].iter().zip(xa.iter().zip(&xb)).map(|(w, (a, b))| w * (a - b)).sum();
        let direct = m.score(&fa).unwrap() - m.score(&fb).unwrap();
        assert!((direct - via_w).abs() < 1e-12);
    }

    #[test]
    fn tape_and_kernel_paths_match_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [HeadKind::A, HeadKind::B, HeadKind::C] {
            for order in [HeadCOrder::ProjectThenPool, HeadCOrder::PoolThenProject] {
                let m = RankerModel::new(kind, 3, 2, order, &mut rng).unwrap();
                let f = random_map(&mut rng, 3, 4, 4);
                let mut tape = Tape::new();
                let bound = m.bind(&mut tape, true).unwrap();
                let input = tape.constant(f.to_tensor()).unwrap();
                let s = bound.score(&mut tape, input).unwrap();
                assert_eq!(tape.scalar(s).to_bits(), m.score(&f).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn head_c_orders_differ_under_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = RankerModel::new(HeadKind::C, 1, 1, HeadCOrder::ProjectThenPool, &mut rng).unwrap();
        m.set_projection(&[1.0], &[0.0]).unwrap();
        m.set_scoring(&[1.0], 0.0).unwrap();
        let f = FeatureMap::new(1, 1, 2, vec![1.0, -1.0]).unwrap();
        assert_eq!(m.score(&f).unwrap(), 0.5);
        m.order = HeadCOrder::PoolThenProject;
        assert_eq!(m.score(&f).unwrap(), 0.0);
    }

    #[test]
    fn bias_shift_preserves_pairwise_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = RankerModel::new(HeadKind::C, 4, 3, HeadCOrder::default(), &mut rng).unwrap();
        let maps: Vec<_> = (0..6).map(|_| random_map(&mut rng, 4, 2, 2)).collect();
        let refs: Vec<&FeatureMap> = maps.iter().collect();
        let before = m.score_batch(&refs).unwrap();
        let w = m.params()[SCORE_W_C].value.data().to_vec();
        m.set_scoring(&w, 42.0).unwrap();
        let after = m.score_batch(&refs).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(before[i] > before[j], after[i] > after[j]);
            }
        }
    }

    #[test]
    fn head_c_requires_attrs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(RankerModel::new(HeadKind::C, 4, 0, HeadCOrder::default(), &mut rng).is_err());
        assert_eq!("C".parse::<HeadKind>().unwrap(), HeadKind::C);
        assert!("d".parse::<HeadKind>().is_err());
    }
}
