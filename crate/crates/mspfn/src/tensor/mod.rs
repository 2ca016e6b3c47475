//! Rank-4 tensors in NCHW layout with tape-based reverse-mode autodiff.
//!
//! Data is stored flat, row-major, immutable after construction; the only
//! interior mutability is gradient accumulation on leaves. All differentiable
//! operations live on [`Tape`]; pure helpers (clamping images, casting,
//! elementwise maps outside the graph) live on [`Tensor`] itself.

mod conv;
mod element;
mod gradcheck;
mod tape;

pub use conv::gemm_rows_parallel;
pub use element::Element;
pub use gradcheck::{analytic_grads, grad_check, grad_check_grads, numeric_grad_at, GradCheckReport};
pub use tape::Tape;
pub(crate) use tape::reflect101;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// NCHW dimensions.
pub type Shape = [usize; 4];

pub fn numel(shape: Shape) -> usize {
    shape.iter().product()
}

static NEXT_TENSOR_ID: AtomicU64 = AtomicU64::new(1);

struct Inner<E> {
    id: u64,
    shape: Shape,
    data: Vec<E>,
    requires_grad: bool,
    // Gradient accumulator for leaves. A Mutex (not RefCell) so tensors stay
    // Send + Sync for read-parallel forward passes; backward is
    // single-threaded per tape, so there is never contention.
    grad: Mutex<Option<Vec<E>>>,
}

/// Cheaply clonable handle to an immutable rank-4 tensor.
pub struct Tensor<E: Element> {
    inner: Arc<Inner<E>>,
}

impl<E: Element> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<E: Element> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Tensor<{}>(id={}, shape={:?}, requires_grad={})",
            E::NAME,
            self.inner.id,
            self.inner.shape,
            self.inner.requires_grad
        )
    }
}

impl<E: Element> Tensor<E> {
    fn new(shape: Shape, data: Vec<E>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel(shape), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_TENSOR_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
            }),
        }
    }

    /// Build a tensor from a flat row-major NCHW buffer.
    pub fn from_vec(shape: Shape, data: Vec<E>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::invalid(
                "from_vec",
                format!("shape {:?} needs {} elements, got {}", shape, numel(shape), data.len()),
            ));
        }
        Ok(Tensor::new(shape, data, false))
    }

    /// Convenience for tests and fixtures: f64 literals into any element type.
    pub fn from_f64_slice(shape: Shape, data: &[f64]) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::invalid(
                "from_f64_slice",
                format!("shape {:?} needs {} elements, got {}", shape, numel(shape), data.len()),
            ));
        }
        Ok(Tensor::new(
            shape,
            data.iter().map(|&v| E::from_f64(v)).collect(),
            false,
        ))
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor::new(shape, vec![E::zero(); numel(shape)], false)
    }

    pub fn ones(shape: Shape) -> Self {
        Tensor::new(shape, vec![E::one(); numel(shape)], false)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Tensor::new(shape, vec![E::from_f64(value); numel(shape)], false)
    }

    /// Uniform in [lo, hi), deterministic in the generator state.
    pub fn uniform(shape: Shape, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let data = (0..numel(shape))
            .map(|_| E::from_f64(rng.uniform(lo, hi)))
            .collect();
        Tensor::new(shape, data, false)
    }

    /// Mark this tensor as a differentiable leaf. Returns a handle sharing
    /// the same storage but with its own identity and gradient slot.
    pub fn requiring_grad(&self) -> Self {
        Tensor::new(self.inner.shape, self.inner.data.clone(), true)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> Shape {
        self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[E] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value at (n, c, h, w). Intended for tests and small fixtures.
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> E {
        let [_, cs, hs, ws] = self.inner.shape;
        self.inner.data[((n * cs + c) * hs + h) * ws + w]
    }

    /// The single element of a [1,1,1,1] tensor.
    pub fn scalar(&self) -> Result<E> {
        if self.numel() != 1 {
            return Err(Error::invalid(
                "scalar",
                format!("expected one element, shape is {:?}", self.shape()),
            ));
        }
        Ok(self.inner.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    /// Accumulated gradient, if backward has produced one.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.inner.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[E]) {
        debug_assert_eq!(delta.len(), self.numel());
        let mut slot = self.inner.grad.lock().unwrap();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi = *gi + *di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Elementwise map outside the autodiff graph (image clamping, casts...).
    pub fn map(&self, f: impl Fn(E) -> E) -> Tensor<E> {
        Tensor::new(
            self.inner.shape,
            self.inner.data.iter().map(|&v| f(v)).collect(),
            false,
        )
    }

    /// Losslessly widen / narrow to another element type (outside the graph).
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor::<F>::new(
            self.inner.shape,
            self.inner.data.iter().map(|v| F::from_f64(v.as_f64())).collect(),
            false,
        )
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.inner.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Pure (non-recorded) elementwise binary op for plumbing outside the
    /// graph, e.g. computing residual targets. Shapes must match exactly.
    pub fn zip(&self, other: &Tensor<E>, f: impl Fn(E, E) -> E) -> Result<Tensor<E>> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "zip",
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(Tensor::new(
            self.inner.shape,
            self.inner
                .data
                .iter()
                .zip(&other.inner.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            false,
        ))
    }
}
