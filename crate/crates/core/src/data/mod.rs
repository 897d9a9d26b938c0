//! Data sources for games: synthetic attribute-value items, IDX image files,
//! numeric tables, and a deterministic batch loader.

mod attributes;
mod idx;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::game::{GameBatch, Labels};
use crate::rng;
use crate::tensor::Tensor;

pub use attributes::AttributeValueDataset;
pub use idx::{parse_idx, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels, IdxDataset};

/// Anything that can assemble a [`GameBatch`] from item indices. `epoch` lets
/// datasets with per-epoch randomness (e.g. distractor draws) vary it.
pub trait GameDataset {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, indices: &[usize], epoch: u64) -> Result<GameBatch>;
}

/// Ground truth attached to each row of a [`TableDataset`].
#[derive(Clone, Debug, PartialEq)]
pub enum TableLabels {
    /// Reconstruct the input row itself.
    Inputs,
    Classes(Vec<usize>),
    Targets { dim: usize, values: Vec<f64> },
}

/// Rows of real-valued Sender inputs with per-row labels.
#[derive(Clone, Debug, PartialEq)]
pub struct TableDataset {
    dim: usize,
    inputs: Vec<f64>,
    labels: TableLabels,
}

impl TableDataset {
    pub fn new(dim: usize, inputs: Vec<f64>, labels: TableLabels) -> Result<Self> {
        if dim == 0 || inputs.len() % dim != 0 {
            return Err(Error::invalid(format!("{} values do not form rows of width {dim}", inputs.len())));
        }
        let rows = inputs.len() / dim;
        let label_rows = match &labels {
            TableLabels::Inputs => rows,
            TableLabels::Classes(c) => c.len(),
            TableLabels::Targets { dim, values } => {
                if *dim == 0 || values.len() % dim != 0 {
                    return Err(Error::invalid("target values do not form whole rows"));
                }
                values.len() / dim
            }
        };
        if label_rows != rows {
            return Err(Error::invalid(format!("{rows} input rows but {label_rows} label rows")));
        }
        Ok(TableDataset { dim, inputs, labels })
    }

    /// Autoencoding data: every row is its own target.
    pub fn reconstruction(dim: usize, inputs: Vec<f64>) -> Result<Self> {
        Self::new(dim, inputs, TableLabels::Inputs)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &TableLabels {
        &self.labels
    }

    fn gather(values: &[f64], dim: usize, indices: &[usize]) -> Result<Tensor> {
        let rows = values.len() / dim;
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            if i >= rows {
                return Err(Error::IndexOutOfRange { index: i, size: rows });
            }
            out.extend_from_slice(&values[i * dim..(i + 1) * dim]);
        }
        Tensor::new(out, &[indices.len(), dim])
    }
}

impl GameDataset for TableDataset {
    fn len(&self) -> usize {
        self.inputs.len() / self.dim
    }

    fn batch(&self, indices: &[usize], _epoch: u64) -> Result<GameBatch> {
        let inputs = Self::gather(&self.inputs, self.dim, indices)?;
        let labels = match &self.labels {
            TableLabels::Inputs => Labels::Targets(inputs.clone()),
            TableLabels::Classes(c) => Labels::Classes(indices.iter().map(|&i| c[i]).collect()),
            TableLabels::Targets { dim, values } => Labels::Targets(Self::gather(values, *dim, indices)?),
        };
        GameBatch::new(inputs, None, labels)
    }
}

/// Splits `0..n` into batches. The last batch is kept even when smaller. With
/// shuffling the order is a function of `(seed, epoch)` alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchLoader {
    pub batch_size: usize,
    pub shuffle: bool,
    pub seed: u64,
}

impl BatchLoader {
    pub fn new(batch_size: usize, shuffle: bool, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(BatchLoader {
            batch_size,
            shuffle,
            seed,
        })
    }

    pub fn order(&self, n: usize, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        if self.shuffle {
            order.shuffle(&mut rng::stream(self.seed, rng::SHUFFLE, epoch));
        }
        order
    }

    pub fn index_batches(&self, n: usize, epoch: u64) -> Vec<Vec<usize>> {
        self.order(n, epoch).chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn batches<'a>(&self, data: &'a dyn GameDataset, epoch: u64) -> impl Iterator<Item = Result<GameBatch>> + 'a {
        self.index_batches(data.len(), epoch)
            .into_iter()
            .map(move |idx| data.batch(&idx, epoch))
    }
}
