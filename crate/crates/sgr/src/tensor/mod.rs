//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a handle to row-major f64 storage plus optional gradient
//! state. All differentiable computation goes through a [`Tape`]: ops are
//! methods on the tape, which records a backward rule whenever an input
//! participates in gradient tracking. [`Tape::backward`] replays the
//! recorded rules in reverse and accumulates gradients into every
//! `requires_grad` tensor reachable from the loss.
//!
//! Everything is f64 and single-threaded by contract; a tape has a single
//! writer, and concurrent tests must each own an independent tape.

mod gradcheck;
mod ops;
mod tape;
#[cfg(test)]
mod tests_ops;

pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::Tape;

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, SgrError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    requires_grad: Cell<bool>,
    grad: RefCell<Option<Vec<f64>>>,
}

/// Handle to a dense row-major f64 tensor. Cloning shares storage.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad.get())
            .field("data", &self.inner.data.borrow())
            .finish()
    }
}

fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn from_parts(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Tensor {
        debug_assert_eq!(numel_of(&shape), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                requires_grad: Cell::new(requires_grad),
                grad: RefCell::new(None),
            }),
        }
    }

    /// Build a tensor, validating extent/length agreement and finiteness.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if numel_of(shape) != data.len() {
            return Err(SgrError::Dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel_of(shape),
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(SgrError::Numeric(format!(
                "non-finite value {bad} in tensor construction"
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), data, false))
    }

    /// Rank-0 scalar.
    pub fn scalar(value: f64) -> Result<Tensor> {
        Tensor::from_vec(&[], vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::from_parts(shape.to_vec(), vec![0.0; numel_of(shape)], false)
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Tensor> {
        Tensor::from_vec(shape, vec![value; numel_of(shape)])
    }

    /// Square identity matrix.
    pub fn eye(n: usize) -> Tensor {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::from_parts(vec![n, n], data, false)
    }

    /// Gradient-tracked leaf (a learnable parameter or probed input).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        t.inner.requires_grad.set(true);
        Ok(t)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.inner.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, on: bool) {
        self.inner.requires_grad.set(on);
    }

    /// Borrow the flat row-major data.
    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(SgrError::Contract(format!(
                "item() needs a one-element tensor, shape is {:?}",
                self.shape()
            )));
        }
        Ok(self.inner.data.borrow()[0])
    }

    /// Accumulated gradient, if any backward pass has reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// In-place data mutation. Reserved for the optimizer's parameter update
    /// and the gradient checker's probes; everything else treats tensors as
    /// immutable once created.
    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) -> Result<()> {
        {
            let mut data = self.inner.data.borrow_mut();
            f(&mut data);
        }
        if let Some(bad) = self.inner.data.borrow().iter().find(|v| !v.is_finite()) {
            return Err(SgrError::Numeric(format!(
                "non-finite value {bad} after in-place update"
            )));
        }
        Ok(())
    }

    /// Nudge one element by `delta` (finite-difference probe).
    pub fn perturb(&self, index: usize, delta: f64) -> Result<()> {
        if index >= self.numel() {
            return Err(SgrError::Index(format!(
                "perturb index {index} out of range for {} elements",
                self.numel()
            )));
        }
        self.update_data(|d| d[index] += delta)
    }

    /// Row `i` of a rank-2 tensor as a plain vector (no tape involvement).
    pub fn row_data(&self, i: usize) -> Result<Vec<f64>> {
        if self.rank() != 2 {
            return Err(SgrError::Dimension(format!(
                "row_data needs rank 2, shape is {:?}",
                self.shape()
            )));
        }
        let cols = self.shape()[1];
        if i >= self.shape()[0] {
            return Err(SgrError::Index(format!(
                "row {i} out of range for {} rows",
                self.shape()[0]
            )));
        }
        Ok(self.inner.data.borrow()[i * cols..(i + 1) * cols].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates_shape_and_finiteness() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).is_err());
        let t = Tensor::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
        assert_eq!(t.rank(), 2);
    }

    #[test]
    fn scalar_is_rank_zero() {
        let s = Tensor::scalar(4.5).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.numel(), 1);
        assert_eq!(s.item().unwrap(), 4.5);
    }

    #[test]
    fn empty_tensor_is_allowed() {
        let t = Tensor::from_vec(&[0], vec![]).unwrap();
        assert_eq!(t.numel(), 0);
    }

    #[test]
    fn grad_accumulates_additively() {
        let t = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        t.accumulate_grad(&[0.5, 0.5]);
        t.accumulate_grad(&[1.0, -0.5]);
        assert_eq!(t.grad().unwrap(), vec![1.5, 0.0]);
        t.zero_grad();
        assert!(t.grad().is_none());
    }

    #[test]
    fn update_data_rejects_non_finite() {
        let t = Tensor::param(&[1], vec![1.0]).unwrap();
        assert!(t.update_data(|d| d[0] = f64::INFINITY).is_err());
    }
}
