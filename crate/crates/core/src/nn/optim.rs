use serde::{Deserialize, Serialize};

use super::NamedParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerConfig {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn build(self, params: &NamedParams) -> Optimizer {
        match self {
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => Optimizer::Adam(Adam::new(lr, beta1, beta2, eps, params)),
            OptimizerConfig::Sgd { lr } => Optimizer::Sgd { lr },
        }
    }
}

/// Adam with bias correction:
/// `m = β1 m + (1-β1) g`, `v = β2 v + (1-β2) g²`,
/// `p -= lr · (m / (1-β1^t)) / (sqrt(v / (1-β2^t)) + ε)`.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, params: &NamedParams) -> Self {
        let zeros = || params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub fn step(&mut self, params: &NamedParams) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for ((name, p), m) in params.iter().zip(&self.m) {
            if p.numel() != m.len() {
                return Err(Error::BadShape {
                    op: "adam step",
                    expected: format!("{} values for {name}", m.len()),
                    got: p.shape().to_vec(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((_, p), m), v) in params.iter().zip(&mut self.m).zip(&mut self.v) {
            let Some(g) = p.grad_ref() else { continue };
            let g = g.clone();
            p.update(|values| {
                for i in 0..values.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}

/// Serializable optimizer state, keyed by parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moments: Vec<(String, Vec<f64>)>,
    pub second_moments: Vec<(String, Vec<f64>)>,
}

#[derive(Clone, Debug)]
pub enum Optimizer {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl Optimizer {
    pub fn step(&mut self, params: &NamedParams) -> Result<()> {
        match self {
            Optimizer::Adam(adam) => adam.step(params),
            Optimizer::Sgd { lr } => {
                let lr = *lr;
                for (_, p) in params {
                    let Some(g) = p.grad_ref() else { continue };
                    let g = g.clone();
                    p.update(|values| values.iter_mut().zip(&g).for_each(|(v, g)| *v -= lr * g));
                }
                Ok(())
            }
        }
    }

    pub fn state(&self, params: &NamedParams) -> OptimizerState {
        match self {
            Optimizer::Adam(adam) => {
                let named = |xs: &[Vec<f64>]| {
                    params
                        .iter()
                        .zip(xs)
                        .map(|((n, _), x)| (n.clone(), x.clone()))
                        .collect()
                };
                OptimizerState {
                    step: adam.step,
                    first_moments: named(&adam.m),
                    second_moments: named(&adam.v),
                }
            }
            Optimizer::Sgd { .. } => OptimizerState {
                step: 0,
                first_moments: Vec::new(),
                second_moments: Vec::new(),
            },
        }
    }

    pub fn load_state(&mut self, state: &OptimizerState, params: &NamedParams) -> Result<()> {
        let Optimizer::Adam(adam) = self else {
            return Ok(());
        };
        let pick = |xs: &[(String, Vec<f64>)]| -> Result<Vec<Vec<f64>>> {
            params
                .iter()
                .map(|(name, p)| {
                    let (_, x) = xs
                        .iter()
                        .find(|(n, _)| n == name)
                        .ok_or_else(|| Error::ArchitectureMismatch(format!("no optimizer state for {name}")))?;
                    if x.len() != p.numel() {
                        return Err(Error::ArchitectureMismatch(format!(
                            "optimizer state for {name} has {} values, parameter has {}",
                            x.len(),
                            p.numel()
                        )));
                    }
                    Ok(x.clone())
                })
                .collect()
        };
        adam.m = pick(&state.first_moments)?;
        adam.v = pick(&state.second_moments)?;
        adam.step = state.step;
        Ok(())
    }
}

pub fn zero_grads(params: &NamedParams) {
    for (_, p) in params {
        p.zero_grad();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn params(values: &[f64]) -> NamedParams {
        vec![("p".into(), Tensor::new(values.to_vec(), &[values.len()]).unwrap().requires_grad())]
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let ps = params(&[1.0, -2.0]);
        let mut opt = OptimizerConfig::adam(0.1).build(&ps);
        opt.step(&ps).unwrap();
        assert_eq!(ps[0].1.to_vec(), vec![1.0, -2.0]);
        let Optimizer::Adam(a) = &opt else { unreachable!() };
        assert_eq!(a.moments().0[0], vec![0.0, 0.0]);
        assert_eq!(a.moments().1[0], vec![0.0, 0.0]);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let ps = params(&[0.5]);
        ps[0].1.set_grad(&[1.0]).unwrap();
        let mut opt = OptimizerConfig::adam(0.001).build(&ps);
        opt.step(&ps).unwrap();
        // m_hat = 1, v_hat = 1 at t = 1
        let expected = 0.5 - 0.001 * 1.0 / (1.0 + 1e-8);
        assert!((ps[0].1.to_vec()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let ps = params(&[0.1, 0.7, -3.3]);
        let before: Vec<u64> = ps[0].1.to_vec().iter().map(|v| v.to_bits()).collect();
        let mut opt = OptimizerConfig::adam(0.0).build(&ps);
        for k in 0..50 {
            ps[0].1.set_grad(&[k as f64, -1.0, 0.3]).unwrap();
            opt.step(&ps).unwrap();
        }
        let after: Vec<u64> = ps[0].1.to_vec().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn mismatched_parameters_are_rejected() {
        let ps = params(&[0.1, 0.2]);
        let mut opt = OptimizerConfig::adam(0.1).build(&ps);
        assert!(opt.step(&params(&[1.0])).is_err());
    }

    #[test]
    fn zero_grads_is_idempotent_and_keeps_values() {
        let ps = params(&[1.0, 2.0]);
        ps[0].1.mul(&ps[0].1).unwrap().sum_all().unwrap().backward().unwrap();
        assert_eq!(ps[0].1.grad().unwrap(), vec![2.0, 4.0]);
        zero_grads(&ps);
        zero_grads(&ps);
        assert_eq!(ps[0].1.grad().unwrap(), vec![0.0, 0.0]);
        assert_eq!(ps[0].1.to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn state_roundtrip_continues_identically() {
        let ps = params(&[0.3, -0.4]);
        let mut a = OptimizerConfig::adam(0.01).build(&ps);
        ps[0].1.set_grad(&[0.5, -1.5]).unwrap();
        a.step(&ps).unwrap();
        let snapshot = a.state(&ps);
        let values = ps[0].1.to_vec();
        let mut b = OptimizerConfig::adam(0.01).build(&ps);
        b.load_state(&snapshot, &ps).unwrap();
        a.step(&ps).unwrap();
        let after_a = ps[0].1.to_vec();
        ps[0].1.set_values(&values).unwrap();
        b.step(&ps).unwrap();
        assert_eq!(after_a, ps[0].1.to_vec());
    }
}
