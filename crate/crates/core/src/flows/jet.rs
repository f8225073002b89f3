//! Forward-mode derivative propagation through tanh perceptrons.
//!
//! A jet carries a batch of values `[B × n]`, their directional derivatives
//! stacked direction-major as `[m·B × n]`, and optionally the sum of second
//! derivatives along the first `nz` directions (a Laplacian). Everything is
//! built from recorded tensor ops, so ordinary backward gives parameter
//! gradients of any derivative quantity without double backward.

use crate::error::{Result, StaError};
use crate::nn::{Activation, Mlp};
use crate::tensor::Tensor;

pub(crate) struct Jet {
    pub value: Tensor,
    pub dirs: Tensor,
    pub lap: Option<Tensor>,
    pub m: usize,
    pub nz: usize,
}

/// `[B × n]` repeated `m` times along rows.
fn tile(x: &Tensor, m: usize) -> Result<Tensor> {
    let (b, n) = x.dims2()?;
    x.expand_axis(0, m)?.reshape(&[m * b, n])
}

impl Jet {
    fn linear(self, w: &Tensor, bias: &Tensor) -> Result<Jet> {
        Ok(Jet {
            value: self.value.matmul(w)?.add_bias(bias)?,
            dirs: self.dirs.matmul(w)?,
            lap: match self.lap {
                Some(l) => Some(l.matmul(w)?),
                None => None,
            },
            ..self
        })
    }

    fn tanh(self, want_lap: bool) -> Result<Jet> {
        let (b, n) = self.value.dims2()?;
        let s = self.value.tanh()?;
        let ds = s.square()?.neg()?.add_scalar(1.0)?;
        let lap = if want_lap {
            let d2s = s.mul(&ds)?.scale(-2.0)?;
            let sq = self
                .dirs
                .slice(0, 0, self.nz * b)?
                .square()?
                .reshape(&[self.nz, b * n])?
                .sum_axis(0)?
                .reshape(&[b, n])?;
            let curv = d2s.mul(&sq)?;
            Some(match self.lap {
                Some(l) => ds.mul(&l)?.add(&curv)?,
                None => curv,
            })
        } else {
            None
        };
        let dirs = tile(&ds, self.m)?.mul(&self.dirs)?;
        Ok(Jet {
            value: s,
            dirs,
            lap,
            ..self
        })
    }
}

pub(crate) fn mlp_jet(mlp: &Mlp, input: Jet, want_lap: bool) -> Result<Jet> {
    if mlp.activation != Activation::Tanh {
        return Err(StaError::Config("jets need a tanh perceptron".into()));
    }
    let mut jet = input;
    let last = mlp.layers.len() - 1;
    for (i, layer) in mlp.layers.iter().enumerate() {
        jet = jet.linear(&layer.weight.tensor, &layer.bias.tensor)?;
        if i < last {
            jet = jet.tanh(want_lap)?;
        }
    }
    Ok(jet)
}

/// Unit directions for the first `d` input columns of a `[B × width]`
/// input, followed by any extra direction blocks (each `[B × width]`).
pub(crate) fn input_jet(value: Tensor, d: usize, extra: &[Tensor]) -> Result<Jet> {
    let (b, width) = value.dims2()?;
    let m = d + extra.len();
    let mut data = vec![0.0; d * b * width];
    for i in 0..d {
        for r in 0..b {
            data[(i * b + r) * width + i] = 1.0;
        }
    }
    let mut dirs = Tensor::from_vec(data, &[d * b, width])?;
    if !extra.is_empty() {
        let mut parts = vec![dirs];
        parts.extend(extra.iter().cloned());
        dirs = Tensor::concat(&parts, 0)?;
    }
    Ok(Jet {
        value,
        dirs,
        lap: None,
        m,
        nz: d,
    })
}

/// `Σ_i ∂out_i/∂in_i` per row, from a jet whose `m` directions are the unit
/// input directions and whose output width is also `m`.
pub(crate) fn jet_trace(jet: &Jet) -> Result<Tensor> {
    let (b, n) = jet.value.dims2()?;
    if n != jet.m {
        return Err(StaError::ShapeMismatch {
            op: "jet_trace",
            lhs: vec![jet.m],
            rhs: vec![n],
        });
    }
    let mut mask = vec![0.0; n * b * n];
    for i in 0..n {
        for r in 0..b {
            mask[(i * b + r) * n + i] = 1.0;
        }
    }
    jet.dirs
        .mask(mask)?
        .reshape(&[n, b * n])?
        .sum_axis(0)?
        .reshape(&[b, n])?
        .sum_axis(1)
}
