use super::{numel, Tensor};
use crate::error::{Result, StaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
    Abs,
    Square,
    Sqrt,
    Sin,
    Cos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Operation selector for [`elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Unary(UnaryOp),
    Binary(BinaryOp),
}

/// Graph record: which operation produced a node and from what.
pub(crate) enum Op {
    Binary(BinaryOp, Tensor, Tensor),
    Unary(UnaryOp, Tensor),
    Scale(Tensor, f64),
    Shift(Tensor),
    MatMul {
        a: Tensor,
        b: Tensor,
        ta: bool,
        tb: bool,
    },
    Sum(Tensor),
    SumAxis(Tensor, usize),
    ExpandAxis(Tensor, usize),
    Broadcast(Tensor),
    Reshape(Tensor),
    Transpose(Tensor),
    Slice {
        a: Tensor,
        axis: usize,
        start: usize,
    },
    Pad {
        a: Tensor,
        axis: usize,
        before: usize,
    },
    Concat(Vec<Tensor>, usize),
    AddBias(Tensor, Tensor),
    Mask(Tensor, Vec<f64>),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<&Tensor> {
        match self {
            Op::Binary(_, a, b) | Op::AddBias(a, b) => vec![a, b],
            Op::MatMul { a, b, .. } => vec![a, b],
            Op::Unary(_, a)
            | Op::Scale(a, _)
            | Op::Shift(a)
            | Op::Sum(a)
            | Op::SumAxis(a, _)
            | Op::ExpandAxis(a, _)
            | Op::Broadcast(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Slice { a, .. }
            | Op::Pad { a, .. }
            | Op::Mask(a, _) => vec![a],
            Op::Concat(parts, _) => parts.iter().collect(),
        }
    }

    /// Vector-Jacobian products for each parent, expressed with tensor ops so
    /// they can be recorded when building a higher-order graph.
    pub(crate) fn backward(
        &self,
        out: &Tensor,
        g: &Tensor,
        needs: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let want = |i: usize| needs.get(i).copied().unwrap_or(false);
        Ok(match self {
            Op::Binary(kind, a, b) => {
                let (ga, gb) = match kind {
                    BinaryOp::Add => (
                        want(0).then(|| g.clone()),
                        want(1).then(|| g.clone()),
                    ),
                    BinaryOp::Sub => (
                        want(0).then(|| g.clone()),
                        if want(1) { Some(g.neg()?) } else { None },
                    ),
                    BinaryOp::Mul => (
                        if want(0) { Some(g.mul(b)?) } else { None },
                        if want(1) { Some(g.mul(a)?) } else { None },
                    ),
                    BinaryOp::Div => {
                        let ga = g.div(b)?;
                        let gb = if want(1) {
                            Some(ga.mul(out)?.neg()?)
                        } else {
                            None
                        };
                        (want(0).then_some(ga), gb)
                    }
                };
                vec![
                    ga.map(|t| reduce_to(t, a.shape())).transpose()?,
                    gb.map(|t| reduce_to(t, b.shape())).transpose()?,
                ]
            }
            Op::Unary(kind, a) => {
                let ga = match kind {
                    UnaryOp::Neg => g.neg()?,
                    UnaryOp::Exp => g.mul(out)?,
                    UnaryOp::Log => g.div(a)?,
                    UnaryOp::Tanh => g.mul(&out.square()?.neg()?.add_scalar(1.0)?)?,
                    UnaryOp::Sigmoid => g.mul(&out.mul(&out.neg()?.add_scalar(1.0)?)?)?,
                    UnaryOp::Relu => {
                        let mask = a.data().iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 });
                        g.mask(mask.collect())?
                    }
                    UnaryOp::Abs => {
                        let sign = a.data().iter().map(|&v| {
                            if v > 0.0 {
                                1.0
                            } else if v < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        });
                        g.mask(sign.collect())?
                    }
                    UnaryOp::Square => g.mul(a)?.scale(2.0)?,
                    UnaryOp::Sqrt => g.div(out)?.scale(0.5)?,
                    UnaryOp::Sin => g.mul(&a.cos()?)?,
                    UnaryOp::Cos => g.mul(&a.sin()?)?.neg()?,
                };
                vec![Some(ga)]
            }
            Op::Scale(_, c) => vec![Some(g.scale(*c)?)],
            Op::Shift(_) => vec![Some(g.clone())],
            Op::Mask(_, m) => vec![Some(g.mask(m.clone())?)],
            Op::MatMul { a, b, ta, tb } => {
                let ga = if want(0) {
                    Some(if *ta {
                        b.matmul_t(g, *tb, true)?
                    } else {
                        g.matmul_t(b, false, !*tb)?
                    })
                } else {
                    None
                };
                let gb = if want(1) {
                    Some(if *tb {
                        g.matmul_t(a, true, *ta)?
                    } else {
                        a.matmul_t(g, !*ta, false)?
                    })
                } else {
                    None
                };
                vec![ga, gb]
            }
            Op::Sum(a) => vec![Some(g.broadcast_to(a.shape())?)],
            Op::SumAxis(a, axis) => vec![Some(g.expand_axis(*axis, a.shape()[*axis])?)],
            Op::ExpandAxis(_, axis) => vec![Some(g.sum_axis(*axis)?)],
            Op::Broadcast(a) => vec![Some(g.sum()?.reshape(a.shape())?)],
            Op::Reshape(a) => vec![Some(g.reshape(a.shape())?)],
            Op::Transpose(_) => vec![Some(g.transpose()?)],
            Op::Slice { a, axis, start } => {
                vec![Some(g.pad(*axis, *start, a.shape()[*axis])?)]
            }
            Op::Pad { a, axis, before } => {
                vec![Some(g.slice(*axis, *before, a.shape()[*axis])?)]
            }
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                let mut grads = Vec::with_capacity(parts.len());
                for (i, p) in parts.iter().enumerate() {
                    let len = p.shape()[*axis];
                    grads.push(if want(i) {
                        Some(g.slice(*axis, offset, len)?)
                    } else {
                        None
                    });
                    offset += len;
                }
                grads
            }
            Op::AddBias(_, _) => vec![
                want(0).then(|| g.clone()),
                if want(1) { Some(g.sum_axis(0)?) } else { None },
            ],
        })
    }
}

fn reduce_to(g: Tensor, shape: &[usize]) -> Result<Tensor> {
    if g.shape() == shape {
        Ok(g)
    } else {
        g.sum()?.reshape(shape)
    }
}

fn record(op: Op) -> Option<Op> {
    if op.parents().iter().any(|p| p.requires_grad()) {
        Some(op)
    } else {
        None
    }
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        numel(&shape[..axis]),
        shape[axis],
        numel(&shape[axis + 1..]),
    )
}

fn check_axis(t: &Tensor, axis: usize) -> Result<()> {
    if axis >= t.rank() {
        Err(StaError::InvalidAxis {
            axis,
            rank: t.rank(),
        })
    } else {
        Ok(())
    }
}

fn apply_unary(kind: UnaryOp, v: f64) -> f64 {
    match kind {
        UnaryOp::Neg => -v,
        UnaryOp::Exp => v.exp(),
        UnaryOp::Log => v.ln(),
        UnaryOp::Tanh => v.tanh(),
        UnaryOp::Sigmoid => {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        }
        UnaryOp::Relu => {
            if v > 0.0 {
                v
            } else {
                0.0
            }
        }
        UnaryOp::Abs => v.abs(),
        UnaryOp::Square => v * v,
        UnaryOp::Sqrt => v.sqrt(),
        UnaryOp::Sin => v.sin(),
        UnaryOp::Cos => v.cos(),
    }
}

#[inline]
fn apply_binary(kind: BinaryOp, x: f64, y: f64) -> f64 {
    match kind {
        BinaryOp::Add => x + y,
        BinaryOp::Sub => x - y,
        BinaryOp::Mul => x * y,
        BinaryOp::Div => x / y,
    }
}

/// Dispatches one of the elementwise primitives; `b` is required for binary ops.
pub fn elementwise(op: ElementwiseOp, a: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    match (op, b) {
        (ElementwiseOp::Unary(u), _) => a.unary(u),
        (ElementwiseOp::Binary(k), Some(b)) => a.binary(k, b),
        (ElementwiseOp::Binary(_), None) => Err(StaError::Domain {
            op: "elementwise",
            reason: "binary op needs a second operand".into(),
        }),
    }
}

impl Tensor {
    pub fn unary(&self, kind: UnaryOp) -> Result<Tensor> {
        match kind {
            UnaryOp::Log if self.data().iter().any(|&v| v <= 0.0) => {
                return Err(StaError::Domain {
                    op: "log",
                    reason: "non-positive input".into(),
                })
            }
            UnaryOp::Sqrt if self.data().iter().any(|&v| v < 0.0) => {
                return Err(StaError::Domain {
                    op: "sqrt",
                    reason: "negative input".into(),
                })
            }
            _ => {}
        }
        let data = self.data().iter().map(|&v| apply_unary(kind, v)).collect();
        Ok(Tensor::build(
            data,
            self.shape().to_vec(),
            record(Op::Unary(kind, self.clone())),
        ))
    }

    pub fn binary(&self, kind: BinaryOp, other: &Tensor) -> Result<Tensor> {
        if kind == BinaryOp::Div && other.data().iter().any(|&v| v == 0.0) {
            return Err(StaError::Domain {
                op: "div",
                reason: "division by zero".into(),
            });
        }
        let (a, b) = (self.data(), other.data());
        let (data, shape): (Vec<f64>, Vec<usize>) = if self.shape() == other.shape()
            || (a.len() == 1 && b.len() == 1)
        {
            (
                a.iter().zip(b).map(|(&x, &y)| apply_binary(kind, x, y)).collect(),
                self.shape().to_vec(),
            )
        } else if b.len() == 1 {
            let y = b[0];
            (
                a.iter().map(|&x| apply_binary(kind, x, y)).collect(),
                self.shape().to_vec(),
            )
        } else if a.len() == 1 {
            let x = a[0];
            (
                b.iter().map(|&y| apply_binary(kind, x, y)).collect(),
                other.shape().to_vec(),
            )
        } else {
            return Err(StaError::ShapeMismatch {
                op: "elementwise",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        };
        Ok(Tensor::build(
            data,
            shape,
            record(Op::Binary(kind, self.clone(), other.clone())),
        ))
    }

    pub fn add(&self, o: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Add, o)
    }
    pub fn sub(&self, o: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Sub, o)
    }
    pub fn mul(&self, o: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Mul, o)
    }
    pub fn div(&self, o: &Tensor) -> Result<Tensor> {
        self.binary(BinaryOp::Div, o)
    }
    pub fn neg(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Neg)
    }
    pub fn exp(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Exp)
    }
    pub fn log(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Log)
    }
    pub fn tanh(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Tanh)
    }
    pub fn sigmoid(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Sigmoid)
    }
    pub fn relu(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Relu)
    }
    pub fn abs(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Abs)
    }
    pub fn square(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Square)
    }
    pub fn sqrt(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Sqrt)
    }
    pub fn sin(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Sin)
    }
    pub fn cos(&self) -> Result<Tensor> {
        self.unary(UnaryOp::Cos)
    }

    /// `self * c` for a constant `c`.
    pub fn scale(&self, c: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v * c).collect();
        Ok(Tensor::build(
            data,
            self.shape().to_vec(),
            record(Op::Scale(self.clone(), c)),
        ))
    }

    /// `self + c` for a constant `c`.
    pub fn add_scalar(&self, c: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|&v| v + c).collect();
        Ok(Tensor::build(
            data,
            self.shape().to_vec(),
            record(Op::Shift(self.clone())),
        ))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mask(&self, m: Vec<f64>) -> Result<Tensor> {
        if m.len() != self.numel() {
            return Err(StaError::ShapeMismatch {
                op: "mask",
                lhs: self.shape().to_vec(),
                rhs: vec![m.len()],
            });
        }
        let data = self.data().iter().zip(&m).map(|(&v, &w)| v * w).collect();
        Ok(Tensor::build(
            data,
            self.shape().to_vec(),
            record(Op::Mask(self.clone(), m)),
        ))
    }

    /// Clamps values into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        let mask: Vec<f64> = self
            .data()
            .iter()
            .map(|&v| if v >= lo && v <= hi { 1.0 } else { 0.0 })
            .collect();
        let data: Vec<f64> = self.data().iter().map(|&v| v.clamp(lo, hi)).collect();
        let passthrough = self.mask(mask)?;
        // value = clamp(x); gradient = mask, recorded through `passthrough`
        let offset: Vec<f64> = data
            .iter()
            .zip(passthrough.data())
            .map(|(c, p)| c - p)
            .collect();
        passthrough.add(&Tensor::from_vec(offset, self.shape())?)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` where `op` optionally transposes a matrix.
    pub fn matmul_t(&self, other: &Tensor, ta: bool, tb: bool) -> Result<Tensor> {
        let (ar, ac) = self.dims2()?;
        let (br, bc) = other.dims2()?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(StaError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape().to_vec(),
                rhs: other.shape().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
        let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
        // SAFETY: strides describe the row-major buffers of the given sizes.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                self.data().as_ptr(),
                rsa,
                csa,
                other.data().as_ptr(),
                rsb,
                csb,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Ok(Tensor::build(
            out,
            vec![m, n],
            record(Op::MatMul {
                a: self.clone(),
                b: other.clone(),
                ta,
                tb,
            }),
        ))
    }

    /// Adds a bias row `b` (length n) to every row of an m×n matrix.
    pub fn add_bias(&self, b: &Tensor) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if b.shape() != [n] {
            return Err(StaError::ShapeMismatch {
                op: "add_bias",
                lhs: self.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut data = self.data().to_vec();
        let bias = b.data();
        for row in data.chunks_exact_mut(n) {
            for (v, &c) in row.iter_mut().zip(bias) {
                *v += c;
            }
        }
        debug_assert_eq!(data.len(), m * n);
        Ok(Tensor::build(
            data,
            vec![m, n],
            record(Op::AddBias(self.clone(), b.clone())),
        ))
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s = self.data().iter().sum();
        Ok(Tensor::build(vec![s], vec![], record(Op::Sum(self.clone()))))
    }

    pub fn mean(&self) -> Result<Tensor> {
        self.sum()?.scale(1.0 / self.numel() as f64)
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis(self, axis)?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let src = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for j in 0..n {
                let base = (o * n + j) * inner;
                for (d, &s) in dst.iter_mut().zip(&src[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        Ok(Tensor::build(
            out,
            shape,
            record(Op::SumAxis(self.clone(), axis)),
        ))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis(self, axis)?;
        let n = self.shape()[axis] as f64;
        self.sum_axis(axis)?.scale(1.0 / n)
    }

    /// Reduces with `sum` or `mean`, over all elements or the given axes.
    pub fn reduce(&self, mean: bool, axes: Option<&[usize]>) -> Result<Tensor> {
        match axes {
            None => {
                if mean {
                    self.mean()
                } else {
                    self.sum()
                }
            }
            Some(axes) => {
                let mut sorted = axes.to_vec();
                sorted.sort_unstable();
                sorted.dedup();
                let mut t = self.clone();
                for &ax in sorted.iter().rev() {
                    t = if mean { t.mean_axis(ax)? } else { t.sum_axis(ax)? };
                }
                Ok(t)
            }
        }
    }

    /// Inserts a new axis of length `n` at `axis`, copying values along it.
    pub fn expand_axis(&self, axis: usize, n: usize) -> Result<Tensor> {
        if axis > self.rank() || n == 0 {
            return Err(StaError::InvalidAxis {
                axis,
                rank: self.rank(),
            });
        }
        let outer = numel(&self.shape()[..axis]);
        let inner = numel(&self.shape()[axis..]);
        let src = self.data();
        let mut out = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            let block = &src[o * inner..(o + 1) * inner];
            for _ in 0..n {
                out.extend_from_slice(block);
            }
        }
        let mut shape = self.shape().to_vec();
        shape.insert(axis, n);
        Ok(Tensor::build(
            out,
            shape,
            record(Op::ExpandAxis(self.clone(), axis)),
        ))
    }

    /// Broadcasts a single-element tensor to `shape`.
    pub fn broadcast_to(&self, shape: &[usize]) -> Result<Tensor> {
        if self.numel() != 1 {
            return Err(StaError::ShapeMismatch {
                op: "broadcast_to",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor::build(
            vec![self.data()[0]; numel(shape)],
            shape.to_vec(),
            record(Op::Broadcast(self.clone())),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(StaError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        if shape == self.shape() {
            return Ok(self.clone());
        }
        Ok(Tensor::build(
            self.data().to_vec(),
            shape.to_vec(),
            record(Op::Reshape(self.clone())),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let src = self.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        Ok(Tensor::build(
            out,
            vec![n, m],
            record(Op::Transpose(self.clone())),
        ))
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis(self, axis)?;
        let (outer, n, inner) = split_axis(self.shape(), axis);
        if len == 0 || start + len > n {
            return Err(StaError::OutOfRange(format!(
                "slice {start}..{} of axis with length {n}",
                start + len
            )));
        }
        if start == 0 && len == n {
            return Ok(self.clone());
        }
        let src = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Ok(Tensor::build(
            out,
            shape,
            record(Op::Slice {
                a: self.clone(),
                axis,
                start,
            }),
        ))
    }

    /// Embeds `self` into a zero tensor whose `axis` has length `total`.
    pub fn pad(&self, axis: usize, before: usize, total: usize) -> Result<Tensor> {
        check_axis(self, axis)?;
        let (outer, len, inner) = split_axis(self.shape(), axis);
        if before + len > total {
            return Err(StaError::OutOfRange(format!(
                "pad {before}+{len} exceeds {total}"
            )));
        }
        let src = self.data();
        let mut out = vec![0.0; outer * total * inner];
        for o in 0..outer {
            let dst = (o * total + before) * inner;
            out[dst..dst + len * inner].copy_from_slice(&src[o * len * inner..(o + 1) * len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::build(
            out,
            shape,
            record(Op::Pad {
                a: self.clone(),
                axis,
                before,
            }),
        ))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| StaError::InvalidShape {
            shape: vec![],
            reason: "concat of zero tensors".into(),
        })?;
        check_axis(first, axis)?;
        for p in parts {
            let same_rank = p.rank() == first.rank();
            let same_other = same_rank
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !same_other {
                return Err(StaError::ShapeMismatch {
                    op: "concat",
                    lhs: first.shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        if parts.len() == 1 {
            return Ok(first.clone());
        }
        let outer = numel(&first.shape()[..axis]);
        let inner = numel(&first.shape()[axis + 1..]);
        let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape()[axis] * inner;
                out.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        Ok(Tensor::build(
            out,
            shape,
            record(Op::Concat(parts.to_vec(), axis)),
        ))
    }
}
