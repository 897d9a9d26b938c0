use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Arithmetic mean of every value observed so far; zero before the first.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanBaseline {
    pub count: u64,
    pub mean: f64,
}

impl RunningMeanBaseline {
    pub fn value(&self) -> f64 {
        self.mean
    }

    pub fn update(&mut self, value: f64) {
        self.count += 1;
        self.mean += (value - self.mean) / self.count as f64;
    }
}

/// Surrogate objective `mean_b[(L_b - baseline) · logP_b + L_b]`, with `L`
/// detached inside the score-function term.
///
/// Its gradient is the REINFORCE estimate for parameters reaching `logP`, plus
/// the exact gradient for any differentiable path inside `L`.
pub fn reinforce_surrogate_with(loss: &Tensor, log_prob: &Tensor, baseline: f64) -> Result<Tensor> {
    if loss.rank() != 1 || loss.shape() != log_prob.shape() {
        return Err(Error::ShapeMismatch {
            op: "reinforce_surrogate",
            lhs: loss.shape().to_vec(),
            rhs: log_prob.shape().to_vec(),
        });
    }
    let advantage = loss.detach().add_scalar(-baseline)?;
    advantage.mul(log_prob)?.add(loss)?.mean_all()
}

/// As [`reinforce_surrogate_with`] using the running baseline, which is read
/// first and then updated with the batch mean loss.
pub fn reinforce_surrogate(loss: &Tensor, log_prob: &Tensor, baseline: &mut RunningMeanBaseline) -> Result<Tensor> {
    let surrogate = reinforce_surrogate_with(loss, log_prob, baseline.value())?;
    let values = loss.values();
    baseline.update(values.iter().sum::<f64>() / values.len() as f64);
    Ok(surrogate)
}
