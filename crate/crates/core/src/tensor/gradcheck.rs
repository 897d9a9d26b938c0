use super::{autograd, Tensor};
use crate::error::Result;

/// Central finite differences of a scalar function at `x`.
pub fn numeric_grad<F>(f: &F, x: &Tensor, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&Tensor) -> Result<Tensor> + ?Sized,
{
    let base = x.to_vec();
    let mut out = Vec::with_capacity(base.len());
    autograd::no_grad(|| {
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += h;
            let mut minus = base.clone();
            minus[i] -= h;
            let fp = f(&Tensor::new(plus, x.shape())?)?.item()?;
            let fm = f(&Tensor::new(minus, x.shape())?)?.item()?;
            out.push((fp - fm) / (2.0 * h));
        }
        Ok(out)
    })
}

/// Largest `|analytic - numeric| / max(1, |analytic|)` over the coordinates
/// of `x`, comparing the tape gradient against central differences.
pub fn grad_check<F>(f: &F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<Tensor> + ?Sized,
{
    let leaf = x.detach().requires_grad();
    let y = f(&leaf)?;
    let analytic = if y.is_tracked() {
        y.backward()?;
        leaf.grad().unwrap_or_default()
    } else {
        vec![0.0; leaf.numel()]
    };
    let numeric = numeric_grad(f, x, h)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max))
}

/// Like [`grad_check`], but over parameter leaves used by a closure that
/// reads them directly. Gradients of `params` are overwritten.
pub fn grad_check_params<F>(params: &[Tensor], f: F, h: f64) -> Result<f64>
where
    F: Fn() -> Result<Tensor>,
{
    autograd::reset();
    params.iter().for_each(Tensor::zero_grad);
    f()?.backward()?;
    let mut worst = 0.0f64;
    for p in params {
        let analytic = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
        let base = p.to_vec();
        for (i, a) in analytic.iter().enumerate() {
            let mut probe = base.clone();
            probe[i] = base[i] + h;
            p.set_values(&probe)?;
            let fp = autograd::no_grad(&f)?.item()?;
            probe[i] = base[i] - h;
            p.set_values(&probe)?;
            let fm = autograd::no_grad(&f)?.item()?;
            p.set_values(&base)?;
            let n = (fp - fm) / (2.0 * h);
            worst = worst.max((a - n).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}
