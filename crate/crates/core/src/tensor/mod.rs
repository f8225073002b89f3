//! Dense `f64` tensors with a recorded computation graph.
//!
//! Every operation that touches a tensor with `requires_grad` set records a
//! node pointing at its parents. [`grad`] walks that graph in reverse. When
//! called with `create_graph = true` the backward pass itself is recorded,
//! so gradients can be differentiated again.
//!
//! Broadcasting is limited to two cases: equal shapes, or one operand with a
//! single element. Bias rows and block tiling have their own explicit ops.

mod autograd;
mod check;
pub mod container;
mod ops;

use std::cell::Cell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Result, StaError};

pub use autograd::grad;
pub use check::{finite_diff_check, GradCheckReport};
pub(crate) use ops::Op;
pub use ops::{elementwise, BinaryOp, ElementwiseOp, UnaryOp};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Disables graph recording on the current thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    NoGradGuard { prev }
}

pub(crate) fn set_grad_enabled(enabled: bool) -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|g| g.replace(enabled));
    NoGradGuard { prev }
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) struct Node {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) op: Option<Op>,
}

/// Cheaply clonable handle to an immutable tensor node.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) node: Arc<Node>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub(crate) fn build(data: Vec<f64>, shape: Vec<usize>, op: Option<Op>) -> Tensor {
        debug_assert_eq!(numel(&shape), data.len());
        let record = op.is_some() && is_grad_enabled();
        let op = if record { op } else { None };
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad: record,
                op,
            }),
        }
    }

    /// Constant tensor. Fails when the data length does not match the shape.
    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(StaError::InvalidShape {
                shape: shape.to_vec(),
                reason: "dimensions must be positive".into(),
            });
        }
        if numel(shape) != data.len() {
            return Err(StaError::InvalidShape {
                shape: shape.to_vec(),
                reason: format!("expected {} elements, got {}", numel(shape), data.len()),
            });
        }
        Ok(Tensor::build(data, shape.to_vec(), None))
    }

    /// Leaf tensor that gradients flow into.
    pub fn leaf(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let t = Tensor::from_vec(data, shape)?;
        Ok(t.requiring_grad())
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::build(vec![v], vec![], None)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor::build(vec![0.0; numel(shape)], shape.to_vec(), None)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Tensor::build(vec![v; numel(shape)], shape.to_vec(), None)
    }

    /// Same values as a fresh leaf that requires gradients.
    pub fn requiring_grad(&self) -> Tensor {
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: self.node.shape.clone(),
                data: self.node.data.clone(),
                requires_grad: true,
                op: None,
            }),
        }
    }

    /// Same values, cut from the graph.
    pub fn detach(&self) -> Tensor {
        if !self.node.requires_grad {
            return self.clone();
        }
        Tensor::build(self.node.data.clone(), self.node.shape.clone(), None)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.node.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.node.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.node.data[0]
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape() {
            [m, n] => Ok((*m, *n)),
            s => Err(StaError::InvalidShape {
                shape: s.to_vec(),
                reason: "expected a matrix".into(),
            }),
        }
    }

    pub(crate) fn op(&self) -> Option<&Op> {
        self.node.op.as_ref()
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape() && self.data() == other.data()
    }
}

/// Named trainable tensor. The optimizer swaps in a new leaf each step.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        Ok(Parameter {
            name: name.into(),
            tensor: Tensor::leaf(data, shape)?,
        })
    }

    pub fn set_data(&mut self, data: Vec<f64>) -> Result<()> {
        self.tensor = Tensor::leaf(data, self.tensor.shape())?;
        Ok(())
    }
}
