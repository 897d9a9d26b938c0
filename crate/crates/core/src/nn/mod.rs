//! Trainable building blocks: linear maps, embeddings, recurrent cells and
//! optimizers.

mod cell;
mod optim;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub use cell::{CellKind, CellState, RnnCell};
pub use optim::{zero_grads, Adam, Optimizer, OptimizerConfig, OptimizerState};

/// Parameters in a stable, documented order, keyed by dotted path.
pub type NamedParams = Vec<(String, Tensor)>;

pub trait Module {
    fn parameters(&self) -> NamedParams;
}

pub fn prefixed(prefix: &str, params: NamedParams) -> NamedParams {
    params
        .into_iter()
        .map(|(name, t)| (format!("{prefix}.{name}"), t))
        .collect()
}

/// Weight matrix `[rows x fan_in]` drawn uniformly from `±1/sqrt(fan_in)`.
pub fn uniform_weight(rows: usize, fan_in: usize, rng: &mut Rng) -> Result<Tensor> {
    if rows == 0 || fan_in == 0 {
        return Err(Error::invalid(format!(
            "parameter dimensions must be positive, got {rows}x{fan_in}"
        )));
    }
    let bound = 1.0 / (fan_in as f64).sqrt();
    let values = (0..rows * fan_in).map(|_| rng.gen_range(-bound..=bound)).collect();
    Ok(Tensor::new(values, &[rows, fan_in])?.requires_grad())
}

pub fn zero_bias(n: usize) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::invalid("bias dimension must be positive"));
    }
    Ok(Tensor::zeros(&[n]).requires_grad())
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Linear {
            weight: uniform_weight(output, input, rng)?,
            bias: zero_bias(output)?,
        })
    }

    pub fn input_size(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `x[B x in] -> x W^T + b`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.linear(&self.weight, Some(&self.bias))
    }
}

impl Module for Linear {
    fn parameters(&self) -> NamedParams {
        vec![("weight".into(), self.weight.clone()), ("bias".into(), self.bias.clone())]
    }
}

/// Symbol embedding table `[V x d]`. Initialized as a linear map from one-hot
/// vectors, i.e. with fan-in `V`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let t = uniform_weight(dim, vocab, rng)?;
        // drawn as [dim x vocab] to use fan-in = vocab, stored transposed
        let table = crate::tensor::no_grad(|| t.transpose())?.requires_grad();
        Ok(Embedding { table })
    }

    pub fn vocab_size(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn lookup(&self, symbols: &[usize]) -> Result<Tensor> {
        self.table.index_rows(symbols)
    }

    /// Probability-weighted mixture of rows for relaxed symbols `[B x V]`.
    pub fn mix(&self, weights: &Tensor) -> Result<Tensor> {
        weights.matmul(&self.table)
    }
}

impl Module for Embedding {
    fn parameters(&self) -> NamedParams {
        vec![("table".into(), self.table.clone())]
    }
}

/// Hidden-layer activation used by the small MLPs of the reference games.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Stack of linear layers with an activation between them (none after the
/// last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

impl Mlp {
    /// `sizes = [in, hidden.., out]`
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid("an MLP needs at least input and output sizes"));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Mlp { layers, activation })
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_size)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                h = self.activation.apply(&h)?;
            }
        }
        Ok(h)
    }
}

impl Module for Mlp {
    fn parameters(&self) -> NamedParams {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layer{i}"), l.parameters()))
            .collect()
    }
}
