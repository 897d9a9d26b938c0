use rand::distributions::Open01;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// `g = -ln(-ln u)` with `u` uniform on the open interval (0, 1).
pub fn sample_gumbel(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|_| {
            let u: f64 = rng.sample(Open01);
            -(-u.ln()).ln()
        })
        .collect();
    Tensor::new(values, shape).expect("shape and length agree")
}

/// Relaxed sample `softmax((logits + noise) / τ)` along the last axis, for
/// given Gumbel noise.
pub fn gs_relax(logits: &Tensor, noise: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let axis = logits
        .rank()
        .checked_sub(1)
        .ok_or_else(|| Error::invalid("gs_sample needs at least one axis"))?;
    logits.add(noise)?.scale(1.0 / temperature)?.softmax(axis)
}

pub fn gs_sample(logits: &Tensor, temperature: f64, rng: &mut Rng) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let noise = sample_gumbel(logits.shape(), rng);
    gs_relax(logits, &noise, temperature)
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Draws one index per row of `logits[B x V]` from `softmax(logits)` and
/// returns it with its differentiable log-probability `[B]`.
pub fn categorical_sample(logits: &Tensor, rng: &mut Rng) -> Result<(Vec<usize>, Tensor)> {
    if logits.rank() != 2 {
        return Err(Error::BadShape {
            op: "categorical_sample",
            expected: "[batch x vocab]".into(),
            got: logits.shape().to_vec(),
        });
    }
    let log_p = logits.log_softmax(1)?;
    let v = logits.shape()[1];
    let lp = log_p.values();
    let indices: Vec<usize> = lp
        .chunks(v)
        .map(|row| {
            let probs: Vec<f64> = row.iter().map(|x| x.exp()).collect();
            sample_index(&probs, rng)
        })
        .collect();
    let picked = log_p.pick(&indices)?;
    Ok((indices, picked))
}

/// Row-wise entropy (nats) of `softmax(logits[B x V])`, differentiable.
pub fn entropy_from_logits(logits: &Tensor) -> Result<Tensor> {
    let log_p = logits.log_softmax(1)?;
    let p = logits.softmax(1)?;
    p.mul(&log_p)?.sum_axis(1)?.neg()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::{argmax, grad_check};

    #[test]
    fn gumbel_is_reproducible_and_finite() {
        let a = sample_gumbel(&[1000], &mut rng::stream(1, rng::SAMPLING, 0)).to_vec();
        let b = sample_gumbel(&[1000], &mut rng::stream(1, rng::SAMPLING, 0)).to_vec();
        assert_eq!(a, b);
        assert!(a.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni() {
        let n = 1_000_000;
        let g = sample_gumbel(&[n], &mut rng::stream(2, rng::SAMPLING, 0)).to_vec();
        let mean = g.iter().sum::<f64>() / n as f64;
        // Var Gumbel(0,1) = π²/6
        let sigma = (std::f64::consts::PI.powi(2) / 6.0 / n as f64).sqrt();
        assert!((mean - 0.577_215_664_901_532_9).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn equal_noise_on_uniform_logits_is_uniform() {
        let logits = Tensor::zeros(&[1, 4]);
        let noise = Tensor::full(&[1, 4], 0.37);
        let y = gs_relax(&logits, &noise, 0.5).unwrap().to_vec();
        assert!(y.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn low_temperature_approaches_one_hot() {
        let logits = Tensor::new(vec![0.1, 0.5, -0.3], &[1, 3]).unwrap();
        let noise = Tensor::new(vec![0.2, -0.4, 0.9], &[1, 3]).unwrap();
        let y = gs_relax(&logits, &noise, 1e-3).unwrap().to_vec();
        // argmax of logits + noise is index 2 (0.6 vs 0.3 vs 0.1)
        assert!((y[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_must_be_positive() {
        let mut r = rng::stream(0, rng::SAMPLING, 0);
        let logits = Tensor::zeros(&[1, 2]);
        assert!(gs_sample(&logits, 0.0, &mut r).is_err());
        assert!(gs_sample(&logits, -1.0, &mut r).is_err());
    }

    #[test]
    fn degenerate_categorical() {
        let mut r = rng::stream(0, rng::SAMPLING, 0);
        let logits = Tensor::new(vec![0.0, -1e9, 0.0, -1e9], &[2, 2]).unwrap();
        for _ in 0..100 {
            let (idx, lp) = categorical_sample(&logits, &mut r).unwrap();
            assert_eq!(idx, vec![0, 0]);
            assert!(lp.to_vec().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn categorical_frequencies_match_softmax() {
        let logits = Tensor::new(vec![0.5, -1.0, 1.2, 0.0], &[1, 4]).unwrap();
        let probs = logits.softmax(1).unwrap().to_vec();
        let n = 100_000;
        let mut counts = [0usize; 4];
        let mut r = rng::stream(3, rng::SAMPLING, 0);
        for _ in 0..n {
            counts[categorical_sample(&logits, &mut r).unwrap().0[0]] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn log_prob_gradient_is_onehot_minus_softmax() {
        let logits = Tensor::new(vec![0.3, -0.2, 1.1], &[1, 3]).unwrap();
        let leaf = logits.clone().requires_grad();
        let mut r = rng::stream(4, rng::SAMPLING, 0);
        let (idx, lp) = categorical_sample(&leaf, &mut r).unwrap();
        lp.sum_all().unwrap().backward().unwrap();
        let p = logits.softmax(1).unwrap().to_vec();
        let g = leaf.grad().unwrap();
        for k in 0..3 {
            let onehot = if k == idx[0] { 1.0 } else { 0.0 };
            assert!((g[k] - (onehot - p[k])).abs() < 1e-15);
        }
        let i = idx[0];
        let f = move |x: &Tensor| x.log_softmax(1)?.pick(&[i])?.sum_all();
        assert!(grad_check(&f, &logits, 1e-6).unwrap() < 1e-8);
    }

    #[test]
    fn gs_path_gradient_matches_differences() {
        let logits = Tensor::new(vec![0.3, -0.2, 1.1, 0.4, 0.0, -0.7], &[2, 3]).unwrap();
        let noise = sample_gumbel(&[2, 3], &mut rng::stream(5, rng::SAMPLING, 0));
        let target = Tensor::new(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], &[2, 3]).unwrap();
        for tau in [0.5, 1.0, 2.0] {
            let f = |x: &Tensor| gs_relax(x, &noise, tau)?.mul(&target)?.sum_all();
            assert!(grad_check(&f, &logits, 1e-6).unwrap() < 1e-6);
        }
    }

    #[test]
    fn gumbel_max_matches_categorical() {
        let logits = Tensor::new(vec![1.0, 0.0, -0.5], &[1, 3]).unwrap();
        let p = logits.softmax(1).unwrap().to_vec();
        let n = 100_000;
        let mut counts = [0usize; 3];
        let mut r = rng::stream(6, rng::SAMPLING, 0);
        for _ in 0..n {
            let y = gs_sample(&logits, 2.0, &mut r).unwrap().to_vec();
            counts[argmax(&y)] += 1;
        }
        for (c, p) in counts.iter().zip(&p) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((*c as f64 / n as f64 - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn entropy_of_uniform_is_log_v() {
        let h = entropy_from_logits(&Tensor::zeros(&[2, 4])).unwrap().to_vec();
        for v in h {
            assert!((v - 4f64.ln()).abs() < 1e-12);
        }
    }
}
