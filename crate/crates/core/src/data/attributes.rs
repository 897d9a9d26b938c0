use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{TableDataset, TableLabels};

/// Tuples of `n_attributes` categorical values in `0..n_values`, encoded as
/// concatenated one-hot blocks of width `n_values`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeValueDataset {
    n_attributes: usize,
    n_values: usize,
    tuples: Vec<Vec<usize>>,
}

impl AttributeValueDataset {
    /// All `n_values^n_attributes` tuples in lexicographic order, or a uniform
    /// subset of `subset` of them (without replacement, kept in that order).
    pub fn generate(n_attributes: usize, n_values: usize, subset: Option<usize>, rng: &mut Rng) -> Result<Self> {
        if n_attributes < 1 {
            return Err(Error::invalid("need at least one attribute"));
        }
        if n_values < 2 {
            return Err(Error::invalid("need at least two values per attribute"));
        }
        let total = u32::try_from(n_attributes)
            .ok()
            .and_then(|a| n_values.checked_pow(a))
            .ok_or_else(|| Error::invalid("attribute space too large to index"))?;
        let indices: Vec<usize> = match subset {
            None => (0..total).collect(),
            Some(k) if k > total => {
                return Err(Error::invalid(format!("subset of {k} requested from {total} tuples")));
            }
            Some(k) => {
                let mut idx = rand::seq::index::sample(rng, total, k).into_vec();
                idx.sort_unstable();
                idx
            }
        };
        let tuples = indices
            .into_iter()
            .map(|mut i| {
                let mut t = vec![0; n_attributes];
                for slot in t.iter_mut().rev() {
                    *slot = i % n_values;
                    i /= n_values;
                }
                t
            })
            .collect();
        Ok(AttributeValueDataset {
            n_attributes,
            n_values,
            tuples,
        })
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn dim(&self) -> usize {
        self.n_attributes * self.n_values
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn encode(&self, tuple: &[usize]) -> Result<Vec<f64>> {
        if tuple.len() != self.n_attributes || tuple.iter().any(|&v| v >= self.n_values) {
            return Err(Error::invalid(format!("{tuple:?} is not a valid attribute tuple")));
        }
        let mut out = vec![0.0; self.dim()];
        for (a, &v) in tuple.iter().enumerate() {
            out[a * self.n_values + v] = 1.0;
        }
        Ok(out)
    }

    /// Inverse of [`encode`](Self::encode): the argmax of each block. Every
    /// block must be one-hot.
    pub fn decode(&self, encoded: &[f64]) -> Result<Vec<usize>> {
        if encoded.len() != self.dim() {
            return Err(Error::invalid(format!("expected {} values, got {}", self.dim(), encoded.len())));
        }
        encoded
            .chunks(self.n_values)
            .map(|block| {
                let hot: Vec<usize> = (0..block.len()).filter(|&i| block[i] == 1.0).collect();
                match hot.as_slice() {
                    [v] if block.iter().filter(|&&x| x != 0.0).count() == 1 => Ok(*v),
                    _ => Err(Error::invalid(format!("block {block:?} is not one-hot"))),
                }
            })
            .collect()
    }

    /// Flat `[len x dim]` one-hot matrix.
    pub fn encoded(&self) -> Vec<f64> {
        self.tuples
            .iter()
            .flat_map(|t| self.encode(t).expect("generated tuples are valid"))
            .collect()
    }

    /// Autoencoding view: each encoded item is its own target.
    pub fn reconstruction(&self) -> TableDataset {
        TableDataset::new(self.dim(), self.encoded(), TableLabels::Inputs).expect("consistent shapes")
    }
}
