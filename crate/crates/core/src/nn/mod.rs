//! Minimal dense numerics: tensors, a reverse-mode tape, the single-head
//! graph attention encoder, MLPs, Adam, and checkpoint files.

mod adam;
pub mod checkpoint;
mod gat;
mod graph;
mod mlp;

use rand::RngExt;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamConfig};
pub use gat::{attention_coefficients, gat_encode, GatParams, GatVars};
pub use graph::{masked_softmax_rows, sigmoid, Graph, Var};
pub use mlp::{Activation, Linear, Mlp, MlpVars};

use crate::{Error, Result};

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::Shape(format!(
                "{} values for shape {shape:?}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn uniform(shape: &[usize], bound: f64, rng: &mut crate::rng::Rng) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `x` for `x ≥ 0`, `slope·x` otherwise.
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Anything that owns a fixed, ordered list of named parameter tensors.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}
