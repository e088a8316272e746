use rand::Rng;

use super::ModelError;
use crate::featstore::FeatureMap;
use crate::numkernel::{kernels, uniform_fan_in, Parameter, Tape, Tensor, Var};

/// Pair-input reference model: `s(A, B) = fc2(relu(fc1(pool(A) − pool(B))))`,
/// positive when A is predicted better.
///
/// It has no per-frame score, so ranking a burst of `n` frames takes
/// `n·(n−1)` pair evaluations. Not usable by the capture simulator.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselinePairModel {
    channels: usize,
    hidden: usize,
    params: Vec<Parameter>,
}

impl BaselinePairModel {
    pub fn new<R: Rng + ?Sized>(channels: usize, hidden: usize, rng: &mut R) -> Result<Self, ModelError> {
        if channels == 0 || hidden == 0 {
            return Err(ModelError::Config("baseline needs C ≥ 1 and hidden ≥ 1".into()));
        }
        let params = vec![
            Parameter::new("fc1.weight", uniform_fan_in(rng, &[hidden, channels], channels)),
            Parameter::new("fc1.bias", Tensor::zeros(&[hidden])),
            Parameter::new("fc2.weight", uniform_fan_in(rng, &[1, hidden], hidden)),
            Parameter::new("fc2.bias", Tensor::zeros(&[1])),
        ];
        Ok(Self {
            channels,
            hidden,
            params,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    fn pooled(&self, f: &FeatureMap) -> Result<Vec<f64>, ModelError> {
        if f.channels() != self.channels {
            return Err(ModelError::ChannelMismatch {
                expected: self.channels,
                found: f.channels(),
            });
        }
        Ok(kernels::global_avg_pool(&f.to_tensor())?.into_data())
    }

    fn compare_pooled(&self, a: &[f64], b: &[f64]) -> Result<f64, ModelError> {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let p = |i: usize| &self.params[i].value;
        let h = kernels::relu(&kernels::dense(&Tensor::vector(diff), p(0), p(1))?);
        Ok(kernels::dense(&h, p(2), p(3))?.item())
    }

    pub fn compare(&self, a: &FeatureMap, b: &FeatureMap) -> Result<f64, ModelError> {
        self.compare_pooled(&self.pooled(a)?, &self.pooled(b)?)
    }

    /// Win counts over all ordered pairs: frame `i` earns a win for every
    /// `j ≠ i` with `s(i, j) > s(j, i)`.
    pub fn rank_burst(&self, frames: &[&FeatureMap]) -> Result<Vec<f64>, ModelError> {
        let pooled = frames.iter().map(|f| self.pooled(f)).collect::<Result<Vec<_>, _>>()?;
        let n = pooled.len();
        let mut wins = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                if i != j && self.compare_pooled(&pooled[i], &pooled[j])? > self.compare_pooled(&pooled[j], &pooled[i])? {
                    wins[i] += 1.0;
                }
            }
        }
        Ok(wins)
    }

    /// Records `s(A, B)` on a tape with trainable parameters.
    pub fn pair_score_on_tape(&self, tape: &mut Tape, a: &FeatureMap, b: &FeatureMap) -> Result<Var, ModelError> {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p))
            .collect::<Result<Vec<_>, _>>()?;
        let ta = tape.constant(a.to_tensor())?;
        let tb = tape.constant(b.to_tensor())?;
        let pa = tape.global_avg_pool(ta)?;
        let pb = tape.global_avg_pool(tb)?;
        let d = tape.sub(pa, pb)?;
        let h = tape.dense(d, vars[0], vars[1])?;
        let h = tape.relu(h)?;
        Ok(tape.dense(h, vars[2], vars[3])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_frames_score_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = BaselinePairModel::new(3, 4, &mut rng).unwrap();
        let f = FeatureMap::new(3, 2, 2, vec![0.5; 12]).unwrap();
        assert_eq!(m.compare(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn rank_burst_counts_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = BaselinePairModel::new(1, 1, &mut rng).unwrap();
        m.params_mut()[0].value = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        m.params_mut()[2].value = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let maps: Vec<FeatureMap> = [0.2f32, 0.9, 0.5]
            .iter()
            .map(|v| FeatureMap::new(1, 1, 1, vec![*v]).unwrap())
            .collect();
        let refs: Vec<&FeatureMap> = maps.iter().collect();
        assert_eq!(m.rank_burst(&refs).unwrap(), vec![0.0, 2.0, 1.0]);
    }

    #[test]
    fn tape_matches_kernel_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = BaselinePairModel::new(3, 5, &mut rng).unwrap();
        let a = FeatureMap::new(3, 2, 1, vec![0.1, 0.4, -0.3, 0.8, 0.2, 0.0]).unwrap();
        let b = FeatureMap::new(3, 2, 1, vec![-0.5, 0.2, 0.3, 0.1, 0.9, 0.4]).unwrap();
        let mut tape = Tape::new();
        let s = m.pair_score_on_tape(&mut tape, &a, &b).unwrap();
        assert_eq!(tape.scalar(s), m.compare(&a, &b).unwrap());
    }
}
