//! Dense tensors with reverse-mode automatic differentiation.
//!
//! Tensors are immutable after construction; the only interior mutability
//! is the gradient buffer, written during a backward pass. Each op records
//! its parents and a backward closure, forming an acyclic graph that
//! [`Tensor::backward`] traverses exactly once per node in reverse
//! topological order.

mod conv;
mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, GradReport};

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::scalar::Scalar;

/// Errors from tensor construction and ops.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss function is not deterministic: {0} != {1}")]
    NondeterministicLoss(f64, f64),
}

impl TensorError {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        TensorError::Shape(msg.into())
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

/// Backward rule: given the gradient flowing into this node, push
/// gradients to the parents.
pub(crate) type BackwardFn<E> = Box<dyn Fn(&[E], &[Tensor<E>])>;

pub(crate) struct Node<E: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<E>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<E>>>,
    parents: Vec<Tensor<E>>,
    backward_fn: Option<BackwardFn<E>>,
}

/// An n-dimensional real array, optionally part of a differentiation graph.
///
/// Cloning is cheap (shared node). Row-major layout, NCHW convention for
/// image tensors.
pub struct Tensor<E: Scalar>(Rc<Node<E>>);

impl<E: Scalar> Clone for Tensor<E> {
    fn clone(&self) -> Self {
        Tensor(Rc::clone(&self.0))
    }
}

impl<E: Scalar> std::fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("data", &self.0.data)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl<E: Scalar> Tensor<E> {
    pub fn new(shape: &[usize], data: Vec<E>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    /// Leaf tensor marked as a trainable parameter.
    pub fn param(shape: &[usize], data: Vec<E>) -> Result<Self, TensorError> {
        let t = Self::new(shape, data)?;
        Ok(Tensor(Rc::new(Node {
            requires_grad: true,
            ..Rc::try_unwrap(t.0).ok().expect("fresh node")
        })))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![E::zero(); n], false)
    }

    pub fn filled(shape: &[usize], value: E) -> Self {
        let n = shape.iter().product();
        Self::leaf(shape.to_vec(), vec![value; n], false)
    }

    pub fn scalar(value: E) -> Self {
        Self::leaf(vec![], vec![value], false)
    }

    fn leaf(shape: Vec<usize>, data: Vec<E>, requires_grad: bool) -> Self {
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward_fn: None,
        }))
    }

    /// Result of an op. Detaches from the graph when no parent is tracked.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<E>,
        parents: Vec<Tensor<E>>,
        backward_fn: BackwardFn<E>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if parents.iter().any(|p| p.tracked()) {
            Tensor(Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad: false,
                grad: RefCell::new(None),
                parents,
                backward_fn: Some(backward_fn),
            }))
        } else {
            Self::leaf(shape, data, false)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[E] {
        &self.0.data
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// The scalar value of a single-element tensor.
    pub fn item(&self) -> E {
        assert_eq!(self.len(), 1, "item() on non-scalar tensor");
        self.0.data[0]
    }

    pub(crate) fn tracked(&self) -> bool {
        self.0.requires_grad || self.0.backward_fn.is_some()
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<E>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// A detached copy sharing no graph history.
    pub fn detached(&self) -> Self {
        Self::leaf(self.0.shape.clone(), self.0.data.clone(), false)
    }

    pub(crate) fn accumulate_grad(&self, g: &[E]) {
        if !self.tracked() {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, &v) in buf.iter_mut().zip(g) {
                    *b = *b + v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode gradient propagation from a scalar root.
    ///
    /// Populates `grad` on every tracked tensor reachable from the root.
    /// Leaf gradients accumulate across repeated calls; interior node
    /// gradients are reset at the start of each pass.
    pub fn backward(&self) -> Result<(), TensorError> {
        if self.len() != 1 {
            return Err(TensorError::shape(format!(
                "backward root must be scalar, got shape {:?}",
                self.shape()
            )));
        }
        let order = self.topo_order();
        // Interior nodes get fresh gradients each pass; leaves keep theirs
        // so parameter gradients accumulate.
        for t in &order {
            if t.0.backward_fn.is_some() {
                t.zero_grad();
            }
        }
        self.accumulate_grad(&[E::one()]);
        for t in order.iter().rev() {
            if let Some(back) = &t.0.backward_fn {
                let g = t.0.grad.borrow().clone();
                if let Some(g) = g {
                    back(&g, &t.0.parents);
                }
            }
        }
        Ok(())
    }

    /// Topological order (parents before children), iterative DFS.
    fn topo_order(&self) -> Vec<Tensor<E>> {
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        // stack entries: (node, parents_pushed)
        let mut stack: Vec<(Tensor<E>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(t.0.id) {
                continue;
            }
            let parents = t.0.parents.clone();
            stack.push((t, true));
            for p in parents {
                if !visited.contains(&p.0.id) {
                    stack.push((p, false));
                }
            }
        }
        order
    }
}
