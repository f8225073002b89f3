//! Dense layers, perceptrons and the Adam optimizer.

use rand::Rng;

use crate::error::{Result, StaError};
use crate::tensor::container::NamedTensor;
use crate::tensor::{Parameter, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }
}

/// `y = x·W + b` with `W` stored as in×out.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    /// Uniform init in ±1/√fan_in for both weight and bias.
    pub fn new<R: Rng>(name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Result<Self> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        Ok(Linear {
            weight: Parameter::new(format!("{name}.weight"), w, &[fan_in, fan_out])?,
            bias: Parameter::new(format!("{name}.bias"), b, &[fan_out])?,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.tensor.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.tensor.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight.tensor)?.add_bias(&self.bias.tensor)
    }
}

/// Stack of linear layers with an activation between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `widths` lists every layer boundary, input first, output last.
    pub fn new<R: Rng>(name: &str, widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(StaError::Config(format!("mlp '{name}' needs at least two widths")));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&format!("{name}.layer{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").fan_out()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i < last {
                h = self.activation.apply(&h)?;
            }
        }
        Ok(h)
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. Moments are keyed by parameter position, so
/// the parameter list must be passed in the same order every step.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn update(&mut self, params: &mut [&mut Parameter], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(StaError::Config(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    m: vec![0.0; p.tensor.numel()],
                    v: vec![0.0; p.tensor.numel()],
                })
                .collect();
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), mom) in params.iter_mut().zip(grads).zip(&mut self.moments) {
            let mut data = p.tensor.to_vec();
            for (((w, &gi), m), v) in data
                .iter_mut()
                .zip(g.data())
                .zip(mom.m.iter_mut())
                .zip(mom.v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * gi;
                *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            p.set_data(data)?;
        }
        Ok(())
    }

    pub fn state_tensors(&self, names: &[String]) -> Vec<NamedTensor> {
        let mut out = vec![NamedTensor::new("adam.step", vec![], vec![self.step as f64])];
        for (name, mom) in names.iter().zip(&self.moments) {
            out.push(NamedTensor::new(format!("adam.m.{name}"), vec![mom.m.len()], mom.m.clone()));
            out.push(NamedTensor::new(format!("adam.v.{name}"), vec![mom.v.len()], mom.v.clone()));
        }
        out
    }

    pub fn load_state(&mut self, names: &[String], lookup: impl Fn(&str) -> Option<Vec<f64>>) -> Result<()> {
        let step = lookup("adam.step").ok_or_else(|| StaError::Format("missing adam.step".into()))?;
        self.step = step[0] as u64;
        if self.step == 0 {
            self.moments.clear();
            return Ok(());
        }
        self.moments = names
            .iter()
            .map(|n| {
                let m = lookup(&format!("adam.m.{n}"));
                let v = lookup(&format!("adam.v.{n}"));
                match (m, v) {
                    (Some(m), Some(v)) => Ok(Moments { m, v }),
                    _ => Err(StaError::Format(format!("missing optimizer state for {n}"))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tensor::grad;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = Parameter::new("w", vec![3.0, -2.0], &[2]).unwrap();
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        for _ in 0..500 {
            let loss = p.tensor.square().unwrap().sum().unwrap();
            let g = grad(&loss, &[p.tensor.clone()], false).unwrap();
            opt.update(&mut [&mut p], &g).unwrap();
        }
        assert!(p.tensor.data().iter().all(|v| v.abs() < 1e-2), "{:?}", p.tensor);
    }

    #[test]
    fn mlp_shapes() {
        let mut rng = seeded(0);
        let mlp = Mlp::new("net", &[5, 7, 3], Activation::Tanh, &mut rng).unwrap();
        let x = Tensor::zeros(&[4, 5]);
        assert_eq!(mlp.forward(&x).unwrap().shape(), &[4, 3]);
        assert_eq!(mlp.parameters().len(), 4);
        assert_eq!(mlp.parameters()[2].name, "net.layer1.weight");
    }
}
