use std::rc::Rc;

use super::autograd::record;
use super::{argmax, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Log,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
}

#[derive(Clone, Copy)]
enum Broadcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn broadcast(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(Broadcast, Vec<usize>)> {
    if a.shape() == b.shape() {
        Ok((Broadcast::Same, a.shape().to_vec()))
    } else if a.rank() == 0 {
        Ok((Broadcast::LeftScalar, b.shape().to_vec()))
    } else if b.rank() == 0 {
        Ok((Broadcast::RightScalar, a.shape().to_vec()))
    } else {
        Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

/// Splits `shape` around `axis` into (outer, extent, inner) strides.
fn axis_split(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::BadShape {
            op,
            expected: format!("an axis below rank {}", shape.len()),
            got: shape.to_vec(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::BadShape {
            op,
            expected: format!("rank {rank}"),
            got: t.shape().to_vec(),
        });
    }
    Ok(())
}

/// `a[m x k] * b[k x n]`
pub(crate) fn mm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a[m x k] * b[n x k]^T`
fn mm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            out[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a[k x m]^T * b[k x n]`
fn mm_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let br = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

impl Tensor {
    pub fn elementwise(&self, kind: BinaryKind, other: &Tensor) -> Result<Tensor> {
        let op = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let (mode, shape) = broadcast(op, self, other)?;
        let av = self.values();
        let bv = other.values();
        if kind == BinaryKind::Div && bv.iter().any(|&v| v == 0.0) {
            return Err(Error::DivisionByZero);
        }
        let n: usize = shape.iter().product();
        let ia = move |i: usize| if matches!(mode, Broadcast::LeftScalar) { 0 } else { i };
        let ib = move |i: usize| if matches!(mode, Broadcast::RightScalar) { 0 } else { i };
        let f: fn(f64, f64) -> f64 = match kind {
            BinaryKind::Add => |x: f64, y: f64| x + y,
            BinaryKind::Sub => |x: f64, y: f64| x - y,
            BinaryKind::Mul => |x: f64, y: f64| x * y,
            BinaryKind::Div => |x: f64, y: f64| x / y,
        };
        let values = (0..n).map(|i| f(av[ia(i)], bv[ib(i)])).collect();
        record(values, shape, &[self, other], move |g, needs| {
            let mut ga = needs[0].then(|| vec![0.0; av.len()]);
            let mut gb = needs[1].then(|| vec![0.0; bv.len()]);
            for (i, &gi) in g.iter().enumerate() {
                let (x, y) = (av[ia(i)], bv[ib(i)]);
                let (da, db) = match kind {
                    BinaryKind::Add => (gi, gi),
                    BinaryKind::Sub => (gi, -gi),
                    BinaryKind::Mul => (gi * y, gi * x),
                    BinaryKind::Div => (gi / y, -gi * x / (y * y)),
                };
                if let Some(ga) = ga.as_mut() {
                    ga[ia(i)] += da;
                }
                if let Some(gb) = gb.as_mut() {
                    gb[ib(i)] += db;
                }
            }
            vec![ga, gb]
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryKind::Add, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryKind::Sub, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryKind::Mul, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.elementwise(BinaryKind::Div, other)
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        self.mul(&Tensor::scalar(factor))
    }

    pub fn add_scalar(&self, value: f64) -> Result<Tensor> {
        self.add(&Tensor::scalar(value))
    }

    /// Computes `1 - self`.
    pub fn one_minus(&self) -> Result<Tensor> {
        Tensor::scalar(1.0).sub(self)
    }

    fn map_op<F, D>(&self, forward: F, derivative: D) -> Result<Tensor>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64, f64) -> f64 + 'static,
    {
        let xs = self.values();
        let ys: Rc<Vec<f64>> = Rc::new(xs.iter().map(|&x| forward(x)).collect());
        let out = ys.as_ref().clone();
        record(out, self.shape().to_vec(), &[self], move |g, _| {
            let gx = g
                .iter()
                .zip(xs.iter().zip(ys.iter()))
                .map(|(gi, (&x, &y))| gi * derivative(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn activation(&self, kind: UnaryKind) -> Result<Tensor> {
        match kind {
            UnaryKind::Tanh => self.map_op(f64::tanh, |_, y| 1.0 - y * y),
            UnaryKind::Sigmoid => self.map_op(sigmoid, |_, y| y * (1.0 - y)),
            UnaryKind::Relu => self.map_op(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 }),
            UnaryKind::Exp => self.map_op(f64::exp, |_, y| y),
            UnaryKind::Log => self.map_op(f64::ln, |x, _| 1.0 / x),
            UnaryKind::Neg => self.map_op(|x| -x, |_, _| -1.0),
        }
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.activation(UnaryKind::Tanh)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.activation(UnaryKind::Sigmoid)
    }

    pub fn relu(&self) -> Result<Tensor> {
        self.activation(UnaryKind::Relu)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.activation(UnaryKind::Exp)
    }

    pub fn ln(&self) -> Result<Tensor> {
        self.activation(UnaryKind::Log)
    }

    pub fn neg(&self) -> Result<Tensor> {
        self.activation(UnaryKind::Neg)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        if lo > hi {
            return Err(Error::invalid(format!("clamp bounds {lo} > {hi}")));
        }
        self.map_op(
            move |x| x.clamp(lo, hi),
            move |x, _| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 },
        )
    }

    pub fn reduce(&self, kind: ReduceKind, axis: Option<usize>) -> Result<Tensor> {
        let xs = self.values();
        match axis {
            None => {
                let n = xs.len();
                let sum: f64 = xs.iter().sum();
                let (value, w) = match kind {
                    ReduceKind::Sum => (sum, 1.0),
                    ReduceKind::Mean if n == 0 => return Err(Error::invalid("mean of an empty tensor")),
                    ReduceKind::Mean => (sum / n as f64, 1.0 / n as f64),
                };
                record(vec![value], Vec::new(), &[self], move |g, _| vec![Some(vec![g[0] * w; n])])
            }
            Some(axis) => {
                let (outer, extent, inner) = axis_split("reduce", self.shape(), axis)?;
                let w = match kind {
                    ReduceKind::Sum => 1.0,
                    ReduceKind::Mean if extent == 0 => return Err(Error::invalid("mean over an empty axis")),
                    ReduceKind::Mean => 1.0 / extent as f64,
                };
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for k in 0..extent {
                        let base = (o * extent + k) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += xs[base + i];
                        }
                    }
                }
                if w != 1.0 {
                    out.iter_mut().for_each(|v| *v *= w);
                }
                let mut shape = self.shape().to_vec();
                shape.remove(axis);
                record(out, shape, &[self], move |g, _| {
                    let mut gx = vec![0.0; outer * extent * inner];
                    for o in 0..outer {
                        for k in 0..extent {
                            let base = (o * extent + k) * inner;
                            for i in 0..inner {
                                gx[base + i] = g[o * inner + i] * w;
                            }
                        }
                    }
                    vec![Some(gx)]
                })
            }
        }
    }

    pub fn sum_all(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Sum, None)
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        self.reduce(ReduceKind::Mean, None)
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce(ReduceKind::Sum, Some(axis))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce(ReduceKind::Mean, Some(axis))
    }

    fn softmax_impl(&self, axis: usize, log: bool) -> Result<Tensor> {
        let (outer, extent, inner) = axis_split("softmax", self.shape(), axis)?;
        let xs = self.values();
        let mut probs = vec![0.0; xs.len()];
        let mut logs = vec![0.0; xs.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * extent + k) * inner + i;
                let max = (0..extent).map(|k| xs[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for k in 0..extent {
                    let e = (xs[at(k)] - max).exp();
                    probs[at(k)] = e;
                    z += e;
                }
                let log_z = z.ln();
                for k in 0..extent {
                    probs[at(k)] /= z;
                    logs[at(k)] = xs[at(k)] - max - log_z;
                }
            }
        }
        let probs = Rc::new(probs);
        let out = if log { logs } else { probs.as_ref().clone() };
        record(out, self.shape().to_vec(), &[self], move |g, _| {
            let mut gx = vec![0.0; probs.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * extent + k) * inner + i;
                    if log {
                        let gsum: f64 = (0..extent).map(|k| g[at(k)]).sum();
                        for k in 0..extent {
                            gx[at(k)] = g[at(k)] - probs[at(k)] * gsum;
                        }
                    } else {
                        let dot: f64 = (0..extent).map(|k| g[at(k)] * probs[at(k)]).sum();
                        for k in 0..extent {
                            gx[at(k)] = probs[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Softmax along `axis`, stabilized by subtracting the slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.softmax_impl(axis, false)
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        self.softmax_impl(axis, true)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        expect_rank("matmul", self, 2)?;
        expect_rank("matmul", other, 2)?;
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let (k2, n) = (other.shape()[0], other.shape()[1]);
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let av = self.values();
        let bv = other.values();
        let out = mm(&av, &bv, m, k, n);
        record(out, vec![m, n], &[self, other], move |g, needs| {
            let ga = needs[0].then(|| mm_nt(g, &bv, m, n, k));
            let gb = needs[1].then(|| mm_tn(&av, g, m, k, n));
            vec![ga, gb]
        })
    }

    /// Affine map `self[B x I] * weight[O x I]^T + bias[O]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        expect_rank("linear", self, 2)?;
        expect_rank("linear", weight, 2)?;
        let (rows, inp) = (self.shape()[0], self.shape()[1]);
        let outp = weight.shape()[0];
        if weight.shape()[1] != inp {
            return Err(Error::ShapeMismatch {
                op: "linear",
                lhs: self.shape().to_vec(),
                rhs: weight.shape().to_vec(),
            });
        }
        if let Some(b) = bias {
            if b.shape() != [outp] {
                return Err(Error::ShapeMismatch {
                    op: "linear bias",
                    lhs: vec![outp],
                    rhs: b.shape().to_vec(),
                });
            }
        }
        let xv = self.values();
        let wv = weight.values();
        let mut out = mm_nt(&xv, &wv, rows, inp, outp);
        if let Some(b) = bias {
            let bv = b.values();
            for row in out.chunks_mut(outp.max(1)) {
                row.iter_mut().zip(bv.iter()).for_each(|(o, b)| *o += b);
            }
        }
        let mut inputs = vec![self, weight];
        inputs.extend(bias);
        record(out, vec![rows, outp], &inputs, move |g, needs| {
            let gx = needs[0].then(|| mm(g, &wv, rows, outp, inp));
            let gw = needs[1].then(|| mm_tn(g, &xv, rows, outp, inp));
            let mut grads = vec![gx, gw];
            if needs.len() == 3 {
                let mut gb = vec![0.0; outp];
                for row in g.chunks(outp.max(1)) {
                    gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
                grads.push(needs[2].then_some(gb));
            }
            grads
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        expect_rank("transpose", self, 2)?;
        let (m, n) = (self.shape()[0], self.shape()[1]);
        let xs = self.values();
        let t = |src: &[f64], r: usize, c: usize| {
            let mut out = vec![0.0; r * c];
            for i in 0..r {
                for j in 0..c {
                    out[j * r + i] = src[i * c + j];
                }
            }
            out
        };
        let out = t(&xs, m, n);
        record(out, vec![n, m], &[self], move |g, _| vec![Some(t(g, n, m))])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = self.to_vec();
        record(out, shape.to_vec(), &[self], |g, _| vec![Some(g.to_vec())])
    }

    /// Row gather: `self[V x d]` and `n` indices give `[n x d]`. Gradients of
    /// repeated rows are summed. This is the embedding lookup.
    pub fn index_rows(&self, indices: &[usize]) -> Result<Tensor> {
        expect_rank("index_rows", self, 2)?;
        let (rows, d) = (self.shape()[0], self.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange { index: bad, size: rows });
        }
        let xs = self.values();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&xs[i * d..(i + 1) * d]);
        }
        let indices = indices.to_vec();
        let n = indices.len();
        record(out, vec![n, d], &[self], move |g, _| {
            let mut gx = vec![0.0; rows * d];
            for (r, &i) in indices.iter().enumerate() {
                for j in 0..d {
                    gx[i * d + j] += g[r * d + j];
                }
            }
            vec![Some(gx)]
        })
    }

    /// Picks one entry per row: `self[B x V]`, `indices[B]` give `[B]`.
    pub fn pick(&self, indices: &[usize]) -> Result<Tensor> {
        expect_rank("pick", self, 2)?;
        let (rows, cols) = (self.shape()[0], self.shape()[1]);
        if indices.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "pick",
                lhs: self.shape().to_vec(),
                rhs: vec![indices.len()],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= cols) {
            return Err(Error::IndexOutOfRange { index: bad, size: cols });
        }
        let xs = self.values();
        let out = indices.iter().enumerate().map(|(r, &c)| xs[r * cols + c]).collect();
        let indices = indices.to_vec();
        record(out, vec![rows], &[self], move |g, _| {
            let mut gx = vec![0.0; rows * cols];
            for (r, &c) in indices.iter().enumerate() {
                gx[r * cols + c] = g[r];
            }
            vec![Some(gx)]
        })
    }

    /// Repeats a vector `[n]` into `[rows x n]`.
    pub fn broadcast_rows(&self, rows: usize) -> Result<Tensor> {
        expect_rank("broadcast_rows", self, 1)?;
        let n = self.numel();
        let xs = self.values();
        let out = (0..rows).flat_map(|_| xs.iter().copied()).collect();
        record(out, vec![rows, n], &[self], move |g, _| {
            let mut gx = vec![0.0; n];
            for row in g.chunks(n.max(1)) {
                gx.iter_mut().zip(row).for_each(|(a, v)| *a += v);
            }
            vec![Some(gx)]
        })
    }

    /// Row `b` of the result is row `b` of `steps[which[b]]`. Steps that are
    /// never selected receive no gradient at all.
    pub fn select_rows(steps: &[Tensor], which: &[usize]) -> Result<Tensor> {
        let first = steps.first().ok_or_else(|| Error::invalid("select_rows over no steps"))?;
        expect_rank("select_rows", first, 2)?;
        let shape = first.shape().to_vec();
        if let Some(bad) = steps.iter().find(|s| s.shape() != shape.as_slice()) {
            return Err(Error::ShapeMismatch {
                op: "select_rows",
                lhs: shape,
                rhs: bad.shape().to_vec(),
            });
        }
        let (rows, d) = (shape[0], shape[1]);
        if which.len() != rows {
            return Err(Error::ShapeMismatch {
                op: "select_rows",
                lhs: shape,
                rhs: vec![which.len()],
            });
        }
        if let Some(&bad) = which.iter().find(|&&w| w >= steps.len()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: steps.len(),
            });
        }
        let mut out = Vec::with_capacity(rows * d);
        let values: Vec<_> = steps.iter().map(Tensor::values).collect();
        for (r, &w) in which.iter().enumerate() {
            out.extend_from_slice(&values[w][r * d..(r + 1) * d]);
        }
        let which = which.to_vec();
        let n_steps = steps.len();
        let inputs: Vec<&Tensor> = steps.iter().collect();
        record(out, vec![rows, d], &inputs, move |g, _| {
            let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_steps];
            for (r, &w) in which.iter().enumerate() {
                let gs = grads[w].get_or_insert_with(|| vec![0.0; rows * d]);
                gs[r * d..(r + 1) * d].copy_from_slice(&g[r * d..(r + 1) * d]);
            }
            grads
        })
    }

    /// Forward: one-hot of the row-wise argmax. Backward: identity.
    pub fn straight_through(&self) -> Result<Tensor> {
        expect_rank("straight_through", self, 2)?;
        let cols = self.shape()[1];
        let xs = self.values();
        let mut out = vec![0.0; xs.len()];
        for (row, o) in xs.chunks(cols.max(1)).zip(out.chunks_mut(cols.max(1))) {
            o[argmax(row)] = 1.0;
        }
        record(out, self.shape().to_vec(), &[self], |g, _| vec![Some(g.to_vec())])
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
