//! Dense 64-bit tensors with define-by-run reverse-mode differentiation.
//!
//! Every thread owns one implicit tape. An operation is recorded on it when at
//! least one input is tracked, i.e. is a leaf created with
//! [`Tensor::requires_grad`] or the output of an earlier recorded operation.
//! [`Tensor::backward`] walks the tape in reverse, accumulates gradients into
//! the leaves and clears the tape. Intermediate tensors do not retain their
//! gradients.
//!
//! Broadcasting is limited to a rank-0 scalar against a tensor of any shape.
//! Other alignments go through explicit ops such as
//! [`Tensor::broadcast_rows`] or [`Tensor::index_rows`].

mod autograd;
mod gradcheck;
mod ops;

use std::cell::{Cell, Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

pub use autograd::{is_recording, no_grad, reset};
pub use gradcheck::{grad_check, grad_check_params, numeric_grad};
pub use ops::{BinaryKind, ReduceKind, UnaryKind};

use autograd::NodeRef;

#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

struct Inner {
    shape: Vec<usize>,
    data: RefCell<Rc<Vec<f64>>>,
    requires_grad: bool,
    grad: Option<RefCell<Vec<f64>>>,
    node: Cell<Option<NodeRef>>,
}

impl Tensor {
    pub fn new(values: Vec<f64>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(Error::BadShape {
                op: "new",
                expected: format!("{} values", values.len()),
                got: shape.to_vec(),
            });
        }
        Ok(Self::from_parts(values, shape.to_vec(), false, None))
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![value], Vec::new(), false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::from_parts(vec![0.0; numel], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self::from_parts(vec![value; numel], shape.to_vec(), false, None)
    }

    /// Builds a `rows x cols` matrix from row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::BadShape {
                op: "from_rows",
                expected: format!("rows of length {cols}"),
                got: vec![bad.len()],
            });
        }
        let values = rows.iter().flatten().copied().collect();
        Tensor::new(values, &[rows.len(), cols])
    }

    /// Returns a new leaf holding the same values that accumulates gradients.
    pub fn requires_grad(self) -> Self {
        let values = self.values().as_ref().clone();
        let n = values.len();
        Self::from_parts(values, self.shape().to_vec(), true, Some(vec![0.0; n]))
    }

    /// A constant copy sharing the values, cut off from the tape.
    pub fn detach(&self) -> Self {
        Tensor(Rc::new(Inner {
            shape: self.0.shape.clone(),
            data: RefCell::new(self.values()),
            requires_grad: false,
            grad: None,
            node: Cell::new(None),
        }))
    }

    fn from_parts(values: Vec<f64>, shape: Vec<usize>, requires_grad: bool, grad: Option<Vec<f64>>) -> Self {
        Tensor(Rc::new(Inner {
            shape,
            data: RefCell::new(Rc::new(values)),
            requires_grad,
            grad: grad.map(RefCell::new),
            node: Cell::new(None),
        }))
    }

    pub(crate) fn from_op(values: Vec<f64>, shape: Vec<usize>, node: Option<NodeRef>) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        let t = Self::from_parts(values, shape, node.is_some(), None);
        t.0.node.set(node);
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    /// Shared handle to the current values. Later in-place updates of a
    /// parameter do not affect handles taken before them.
    pub fn values(&self) -> Rc<Vec<f64>> {
        Rc::clone(&self.0.data.borrow())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().as_ref().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        let data = self.0.data.borrow();
        if data.len() != 1 {
            return Err(Error::NotScalar(self.shape().to_vec()));
        }
        Ok(data[0])
    }

    /// True for tracked tensors: gradient leaves and outputs of recorded ops.
    pub fn is_tracked(&self) -> bool {
        self.0.requires_grad
    }

    /// True for leaves created with [`Tensor::requires_grad`].
    pub fn is_param(&self) -> bool {
        self.0.grad.is_some()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.as_ref().map(|g| g.borrow().clone())
    }

    pub(crate) fn grad_ref(&self) -> Option<Ref<'_, Vec<f64>>> {
        self.0.grad.as_ref().map(|g| g.borrow())
    }

    pub fn zero_grad(&self) {
        if let Some(g) = &self.0.grad {
            g.borrow_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f64]) {
        if let Some(g) = &self.0.grad {
            let mut g = g.borrow_mut();
            for (acc, c) in g.iter_mut().zip(contribution) {
                *acc += c;
            }
        }
    }

    /// Overwrites the stored gradient (used when restoring state).
    pub fn set_grad(&self, values: &[f64]) -> Result<()> {
        match &self.0.grad {
            Some(g) if values.len() == self.numel() => {
                g.borrow_mut().copy_from_slice(values);
                Ok(())
            }
            Some(_) => Err(Error::BadShape {
                op: "set_grad",
                expected: format!("{} values", self.numel()),
                got: vec![values.len()],
            }),
            None => Err(Error::invalid("set_grad on a tensor without gradient storage")),
        }
    }

    /// Replaces the values in place, keeping the shape.
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(Error::BadShape {
                op: "set_values",
                expected: format!("{} values", values.len()),
                got: self.shape().to_vec(),
            });
        }
        self.update(|v| v.copy_from_slice(values));
        Ok(())
    }

    /// Mutates the values in place. Copies first if an earlier recorded
    /// operation still holds the old values.
    pub fn update(&self, f: impl FnOnce(&mut [f64])) {
        let mut data = self.0.data.borrow_mut();
        f(Rc::make_mut(&mut data).as_mut_slice());
    }

    pub(crate) fn node(&self) -> Option<NodeRef> {
        self.0.node.get()
    }

    pub(crate) fn set_node(&self, node: Option<NodeRef>) {
        self.0.node.set(node);
    }
}

/// Equal shapes and values; graph state is ignored.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && *self.values() == *other.values()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.0.data.borrow();
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.0.shape);
        if data.len() <= 16 {
            s.field("values", &data.as_slice());
        } else {
            s.field("values", &format_args!("[{} values]", data.len()));
        }
        s.field("tracked", &self.0.requires_grad).finish()
    }
}

/// Index of the largest value in a slice; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_shape() {
        assert!(Tensor::new(vec![1.0, 2.0, 3.0], &[2, 2]).is_err());
        assert_eq!(Tensor::new(vec![], &[0, 3]).unwrap().numel(), 0);
    }

    #[test]
    fn param_has_same_shape_grad() {
        let p = Tensor::new(vec![1.0; 6], &[2, 3]).unwrap().requires_grad();
        assert_eq!(p.grad().unwrap().len(), 6);
        assert!(Tensor::zeros(&[2]).grad().is_none());
    }

    #[test]
    fn update_does_not_alias_old_handles() {
        let p = Tensor::new(vec![1.0, 2.0], &[2]).unwrap().requires_grad();
        let old = p.values();
        p.update(|v| v[0] = 10.0);
        assert_eq!(old[0], 1.0);
        assert_eq!(p.to_vec(), vec![10.0, 2.0]);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }
}
