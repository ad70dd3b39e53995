use serde::{Deserialize, Serialize};

use super::{Graph, Tensor, Var};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform `±1/√in` init, with the final scale applied to the weights.
    pub fn new(inputs: usize, outputs: usize, weight_scale: f64, rng: &mut Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let mut weight = Tensor::uniform(&[outputs, inputs], bound, rng);
        weight.data.iter_mut().for_each(|w| *w *= weight_scale);
        Self {
            weight,
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }
}

/// Fully connected stack: every hidden layer uses `hidden`, the last layer
/// uses `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

pub struct MlpVars {
    layers: Vec<(Var, Var)>,
    hidden: Activation,
    output: Activation,
    input_dim: usize,
}

impl Mlp {
    /// `sizes = [in, h1, …, out]`.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, out_scale: f64, rng: &mut Rng) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let scale = if i + 1 == n { out_scale } else { 1.0 };
                Linear::new(sizes[i], sizes[i + 1], scale, rng)
            })
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Linear::outputs).unwrap_or(0)
    }

    pub fn bind<'p>(&'p self, g: &mut Graph<'p>) -> MlpVars {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (g.param(&l.weight), g.param(&l.bias)))
                .collect(),
            hidden: self.hidden,
            output: self.output,
            input_dim: self.input_dim(),
        }
    }

    /// Convenience: forward a `[batch, in]` matrix without recording
    /// gradients for later use.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let xv = g.input(x.to_vec(), &[batch, self.input_dim()])?;
        let y = vars.forward(&mut g, xv)?;
        Ok(g.value(y).to_vec())
    }

    pub fn named(&self, prefix: &str) -> Vec<(String, &Tensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("{prefix}.{i}.weight"), &l.weight),
                    (format!("{prefix}.{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

impl MlpVars {
    /// Parameter handles in [`Mlp::named`] order.
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(Error::Shape(format!(
                "mlp expects [_, {}], got {shape:?}",
                self.input_dim
            )));
        }
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul_nt(h, w)?;
            let z = g.add_row(z, b)?;
            h = if i == last {
                self.output.apply(g, z)
            } else {
                self.hidden.apply(g, z)
            };
        }
        Ok(h)
    }
}
