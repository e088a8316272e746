use rand::Rng;
use rand_distr::StandardNormal;

use super::ModelError;
use crate::numkernel::{kernels, uniform_fan_in, Parameter, Tape, Tensor, Var};

/// Residual generator: `e = MLP(concat(x, z))` with two ReLU hidden layers of
/// width `4·C′` and a zero-initialised output layer, so a fresh generator
/// returns `e = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorModel {
    attrs: usize,
    noise_dim: usize,
    hidden: usize,
    params: Vec<Parameter>,
}

impl GeneratorModel {
    pub fn new<R: Rng + ?Sized>(attrs: usize, noise_dim: usize, rng: &mut R) -> Result<Self, ModelError> {
        if attrs == 0 {
            return Err(ModelError::Config("generator needs C′ ≥ 1".into()));
        }
        let hidden = 4 * attrs;
        let input = attrs + noise_dim;
        let params = vec![
            Parameter::new("fc1.weight", uniform_fan_in(rng, &[hidden, input], input)),
            Parameter::new("fc1.bias", Tensor::zeros(&[hidden])),
            Parameter::new("fc2.weight", uniform_fan_in(rng, &[hidden, hidden], hidden)),
            Parameter::new("fc2.bias", Tensor::zeros(&[hidden])),
            Parameter::new("fc3.weight", Tensor::zeros(&[attrs, hidden])),
            Parameter::new("fc3.bias", Tensor::zeros(&[attrs])),
        ];
        Ok(Self {
            attrs,
            noise_dim,
            hidden,
            params,
        })
    }

    pub fn attrs(&self) -> usize {
        self.attrs
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
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

    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.noise_dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn check_dims(&self, x: usize, z: usize) -> Result<(), ModelError> {
        if x != self.attrs || z != self.noise_dim {
            return Err(ModelError::Config(format!(
                "generator expects x of length {} and z of length {}, got {x} and {z}",
                self.attrs, self.noise_dim
            )));
        }
        Ok(())
    }

    /// Residual `e` for attribute vector `x` and noise `z`.
    pub fn generate_residual(&self, x: &[f64], z: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_dims(x.len(), z.len())?;
        let mut input = x.to_vec();
        input.extend_from_slice(z);
        let p = |i: usize| &self.params[i].value;
        let h1 = kernels::relu(&kernels::dense(&Tensor::vector(input), p(0), p(1))?);
        let h2 = kernels::relu(&kernels::dense(&h1, p(2), p(3))?);
        Ok(kernels::dense(&h2, p(4), p(5))?.into_data())
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<BoundGenerator, ModelError> {
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| if trainable { tape.param(i, p) } else { tape.constant(p.value.clone()) })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundGenerator {
            attrs: self.attrs,
            noise_dim: self.noise_dim,
            vars,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BoundGenerator {
    attrs: usize,
    noise_dim: usize,
    vars: Vec<Var>,
}

impl BoundGenerator {
    pub fn residual(&self, tape: &mut Tape, x: Var, z: &[f64]) -> Result<Var, ModelError> {
        let xl = tape.value(x).len();
        if xl != self.attrs || z.len() != self.noise_dim {
            return Err(ModelError::Config(format!(
                "generator expects x of length {} and z of length {}, got {xl} and {}",
                self.attrs,
                self.noise_dim,
                z.len()
            )));
        }
        let zv = tape.constant(Tensor::vector(z.to_vec()))?;
        let input = tape.concat(x, zv)?;
        let v = &self.vars;
        let h1 = tape.dense(input, v[0], v[1])?;
        let h1 = tape.relu(h1)?;
        let h2 = tape.dense(h1, v[2], v[3])?;
        let h2 = tape.relu(h2)?;
        Ok(tape.dense(h2, v[4], v[5])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_generator_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GeneratorModel::new(5, 5, &mut rng).unwrap();
        let z = g.sample_noise(&mut rng);
        assert_eq!(g.generate_residual(&[0.3, 0.1, 0.0, 2.0, 1.0], &z).unwrap(), vec![0.0; 5]);
        assert_eq!(g.hidden(), 20);
    }

    #[test]
    fn deterministic_and_dimension_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = GeneratorModel::new(3, 2, &mut rng).unwrap();
        g.params_mut()[4].value.fill(0.1);
        let e1 = g.generate_residual(&[1.0, 0.5, 0.2], &[0.3, -0.3]).unwrap();
        let e2 = g.generate_residual(&[1.0, 0.5, 0.2], &[0.3, -0.3]).unwrap();
        assert_eq!(e1, e2);
        assert!(g.generate_residual(&[1.0], &[0.3, -0.3]).is_err());
        assert!(g.generate_residual(&[1.0, 0.5, 0.2], &[0.3]).is_err());
    }

    #[test]
    fn tape_matches_kernel_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = GeneratorModel::new(3, 3, &mut rng).unwrap();
        g.params_mut()[4].value = uniform_fan_in(&mut rng, &[3, 12], 12);
        let x = [0.2, 0.9, 0.4];
        let z = g.sample_noise(&mut rng);
        let mut tape = Tape::new();
        let bound = g.bind(&mut tape, true).unwrap();
        let xv = tape.constant(Tensor::vector(x.to_vec())).unwrap();
        let e = bound.residual(&mut tape, xv, &z).unwrap();
        assert_eq!(tape.value(e).data(), g.generate_residual(&x, &z).unwrap().as_slice());
    }
}
