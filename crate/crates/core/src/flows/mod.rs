//! Latent flow fields `∇u^k(z, t) + r^k(z)`, their physics losses and the
//! density bookkeeping for posterior and prior.
//!
//! The free functions named after the model operations use reverse-mode
//! autodiff with `create_graph`, so they work for any field, including
//! analytic closures. Training goes through [`FlowFieldBank::evaluate`], which
//! propagates derivatives forward through the tanh perceptrons and needs only
//! one ordinary backward pass for parameter gradients.

mod jet;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::nn::{Activation, Mlp};
use crate::tensor::{grad, set_grad_enabled, Parameter, Tensor};
use jet::{input_jet, jet_trace, mlp_jet};

/// Sinusoidal embedding `[sin(t·f_i), cos(t·f_i)]` with `f_i = base^(-i/half)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub dim: usize,
    pub frequencies: Vec<f64>,
}

impl TimeEmbedding {
    pub const BASE: f64 = 100.0;

    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(StaError::Config(format!("time embedding width must be even, got {dim}")));
        }
        let half = dim / 2;
        let frequencies = (0..half)
            .map(|i| Self::BASE.powf(-(i as f64) / half as f64))
            .collect();
        Ok(TimeEmbedding { dim, frequencies })
    }

    /// Embeds a `[B × 1]` column of times; differentiable in `t`.
    pub fn embed(&self, t: &Tensor) -> Result<Tensor> {
        let half = self.frequencies.len();
        let f = Tensor::from_vec(self.frequencies.clone(), &[1, half])?;
        let arg = t.matmul(&f)?;
        Tensor::concat(&[arg.sin()?, arg.cos()?], 1)
    }

    /// `d/dt` of the embedding at constant times, `[B × dim]`.
    fn embed_dt(&self, t: &[f64]) -> Result<Tensor> {
        let half = self.frequencies.len();
        let mut out = Vec::with_capacity(t.len() * self.dim);
        for &tv in t {
            out.extend(self.frequencies.iter().map(|f| f * (tv * f).cos()));
            out.extend(self.frequencies.iter().map(|f| -f * (tv * f).sin()));
        }
        debug_assert_eq!(out.len(), t.len() * 2 * half);
        Tensor::from_vec(out, &[t.len(), self.dim])
    }
}

pub type PotentialFn = Arc<dyn Fn(&Tensor, &Tensor) -> Result<Tensor> + Send + Sync>;
pub type VectorFieldFn = Arc<dyn Fn(&Tensor) -> Result<Tensor> + Send + Sync>;

/// Scalar potential `u(z, t)`. Closures take `z: [B × d]` and raw times
/// `t: [B × 1]` and return `[B × 1]`.
#[derive(Clone)]
pub enum Potential {
    Mlp(Mlp),
    Analytic(PotentialFn),
}

/// Rotational field `r(z)`; closures map `[B × d]` to `[B × d]`.
#[derive(Clone)]
pub enum Rotational {
    Mlp(Mlp),
    Analytic(VectorFieldFn),
    Disabled,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Mlp(m) => write!(f, "Potential::Mlp({} layers)", m.layers.len()),
            Potential::Analytic(_) => write!(f, "Potential::Analytic"),
        }
    }
}

impl fmt::Debug for Rotational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rotational::Mlp(m) => write!(f, "Rotational::Mlp({} layers)", m.layers.len()),
            Rotational::Analytic(_) => write!(f, "Rotational::Analytic"),
            Rotational::Disabled => write!(f, "Rotational::Disabled"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub latent_dim: usize,
    pub fields: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub rotational: bool,
    pub diffusion_init: f64,
}

impl FlowConfig {
    pub fn new(latent_dim: usize, fields: usize) -> Self {
        FlowConfig {
            latent_dim,
            fields,
            hidden: 128,
            embed_dim: 16,
            rotational: true,
            diffusion_init: 0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlowFieldBank {
    pub d: usize,
    pub k: usize,
    pub embedding: TimeEmbedding,
    pub potentials: Vec<Potential>,
    pub rotationals: Vec<Rotational>,
    /// `ln D_k`.
    pub log_diffusion: Parameter,
}

/// Which derivative quantities [`FlowFieldBank::evaluate`] should produce
/// beyond `∇u` and `r`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Needs {
    pub time_derivative: bool,
    pub laplacian: bool,
    pub divergence: bool,
}

impl Needs {
    pub const ALL: Needs = Needs {
        time_derivative: true,
        laplacian: true,
        divergence: true,
    };
}

/// One field evaluated on a batch. Row vectors are `[B]`.
#[derive(Clone, Debug)]
pub struct FieldValues {
    pub grad_u: Tensor,
    pub r: Option<Tensor>,
    pub dt_u: Option<Tensor>,
    pub lap_u: Option<Tensor>,
    pub div_r: Option<Tensor>,
}

fn time_column(t: f64, b: usize) -> Tensor {
    Tensor::full(&[b, 1], t)
}

fn track(z: &Tensor) -> Tensor {
    if z.requires_grad() {
        z.clone()
    } else {
        z.requiring_grad()
    }
}

fn column(x: &Tensor, k: usize) -> Result<Tensor> {
    let (b, _) = x.dims2()?;
    x.slice(1, k, 1)?.reshape(&[b])
}

/// `[B]` column scaled across `d` columns: `[B × d]`.
fn spread(c: &Tensor, d: usize) -> Result<Tensor> {
    c.expand_axis(1, d)
}

impl FlowFieldBank {
    pub fn new<R: Rng>(cfg: &FlowConfig, rng: &mut R) -> Result<Self> {
        if cfg.latent_dim == 0 || cfg.fields == 0 || cfg.hidden == 0 {
            return Err(StaError::Config("flow bank needs positive d, K and width".into()));
        }
        if !(cfg.diffusion_init > 0.0) {
            return Err(StaError::Config("initial diffusion must be positive".into()));
        }
        let (d, h) = (cfg.latent_dim, cfg.hidden);
        let embedding = TimeEmbedding::new(cfg.embed_dim)?;
        let mut potentials = Vec::with_capacity(cfg.fields);
        let mut rotationals = Vec::with_capacity(cfg.fields);
        for k in 0..cfg.fields {
            potentials.push(Potential::Mlp(Mlp::new(
                &format!("flow.{k}.potential"),
                &[d + cfg.embed_dim, h, h, 1],
                Activation::Tanh,
                rng,
            )?));
            rotationals.push(if cfg.rotational {
                Rotational::Mlp(Mlp::new(
                    &format!("flow.{k}.rotational"),
                    &[d, h, h, d],
                    Activation::Tanh,
                    rng,
                )?)
            } else {
                Rotational::Disabled
            });
        }
        Ok(FlowFieldBank {
            d,
            k: cfg.fields,
            embedding,
            potentials,
            rotationals,
            log_diffusion: Parameter::new(
                "flow.log_diffusion",
                vec![cfg.diffusion_init.ln(); cfg.fields],
                &[cfg.fields],
            )?,
        })
    }

    /// Bank of analytic fields (no trainable networks besides `ln D`).
    pub fn analytic(d: usize, potentials: Vec<PotentialFn>, rotationals: Vec<Option<VectorFieldFn>>) -> Result<Self> {
        if potentials.len() != rotationals.len() || potentials.is_empty() {
            return Err(StaError::Config("need one rotational slot per potential".into()));
        }
        let k = potentials.len();
        Ok(FlowFieldBank {
            d,
            k,
            embedding: TimeEmbedding::new(16)?,
            potentials: potentials.into_iter().map(Potential::Analytic).collect(),
            rotationals: rotationals
                .into_iter()
                .map(|r| r.map_or(Rotational::Disabled, Rotational::Analytic))
                .collect(),
            log_diffusion: Parameter::new("flow.log_diffusion", vec![0.01f64.ln(); k], &[k])?,
        })
    }

    pub fn has_rotational(&self, k: usize) -> bool {
        !matches!(self.rotationals[k], Rotational::Disabled)
    }

    /// `D_k = exp(ln D_k)`, shape `[K]`.
    pub fn diffusion(&self) -> Result<Tensor> {
        self.log_diffusion.tensor.exp()
    }

    fn check(&self, k: usize, z: &Tensor) -> Result<usize> {
        if k >= self.k {
            return Err(StaError::OutOfRange(format!("field {k} of {}", self.k)));
        }
        let (b, d) = z.dims2()?;
        if d != self.d {
            return Err(StaError::ShapeMismatch {
                op: "flow field",
                lhs: vec![b, self.d],
                rhs: z.shape().to_vec(),
            });
        }
        Ok(b)
    }

    /// `u^k(z, t)` for `z: [B × d]` and times `t: [B × 1]`, returns `[B × 1]`.
    pub fn potential(&self, k: usize, z: &Tensor, t: &Tensor) -> Result<Tensor> {
        self.check(k, z)?;
        match &self.potentials[k] {
            Potential::Mlp(m) => {
                let input = Tensor::concat(&[z.clone(), self.embedding.embed(t)?], 1)?;
                m.forward(&input)
            }
            Potential::Analytic(f) => f(z, t),
        }
    }

    /// `r^k(z)`, `[B × d]`; zeros when disabled.
    pub fn rotational(&self, k: usize, z: &Tensor) -> Result<Tensor> {
        self.check(k, z)?;
        match &self.rotationals[k] {
            Rotational::Mlp(m) => m.forward(z),
            Rotational::Analytic(f) => f(z),
            Rotational::Disabled => Ok(Tensor::zeros(z.shape())),
        }
    }

    /// Evaluates field `k` at `z` and integer time `t` by forward-mode jets
    /// for perceptrons, reverse-mode autodiff for analytic fields.
    pub fn evaluate(&self, k: usize, z: &Tensor, t: f64, needs: Needs) -> Result<FieldValues> {
        let b = self.check(k, z)?;
        let d = self.d;
        let (grad_u, dt_u, lap_u) = match &self.potentials[k] {
            Potential::Mlp(m) => {
                let times = vec![t; b];
                let emb = self.embedding.embed(&time_column(t, b))?;
                let input = Tensor::concat(&[z.clone(), emb], 1)?;
                let extra = if needs.time_derivative {
                    let zero = Tensor::zeros(&[b, d]);
                    vec![Tensor::concat(&[zero, self.embedding.embed_dt(&times)?], 1)?]
                } else {
                    vec![]
                };
                let jet = mlp_jet(m, input_jet(input, d, &extra)?, needs.laplacian)?;
                let m_dirs = jet.m;
                let stacked = jet.dirs.reshape(&[m_dirs, b])?;
                let grad_u = stacked.slice(0, 0, d)?.transpose()?;
                let dt_u = if needs.time_derivative {
                    Some(stacked.slice(0, d, 1)?.reshape(&[b])?)
                } else {
                    None
                };
                let lap_u = match jet.lap {
                    Some(l) => Some(l.reshape(&[b])?),
                    None => None,
                };
                (grad_u, dt_u, lap_u)
            }
            Potential::Analytic(_) => {
                let _g = set_grad_enabled(true);
                let zt = track(z);
                let tt = time_column(t, b).requiring_grad();
                let u = self.potential(k, &zt, &tt)?.sum()?;
                let mut g = grad(&u, &[zt.clone(), tt], true)?;
                let dt = g.pop().expect("two inputs").reshape(&[b])?;
                let gu = g.pop().expect("two inputs");
                let lap = if needs.laplacian {
                    Some(hessian_trace(&gu, &zt)?)
                } else {
                    None
                };
                (gu, needs.time_derivative.then_some(dt), lap)
            }
        };
        let (r, div_r) = match &self.rotationals[k] {
            Rotational::Disabled => (None, None),
            Rotational::Mlp(m) if needs.divergence => {
                let jet = mlp_jet(m, input_jet(z.clone(), d, &[])?, false)?;
                let div = jet_trace(&jet)?;
                (Some(jet.value), Some(div))
            }
            Rotational::Mlp(m) => (Some(m.forward(z)?), None),
            Rotational::Analytic(_) => {
                let _g = set_grad_enabled(true);
                let zt = track(z);
                let r = self.rotational(k, &zt)?;
                let div = if needs.divergence {
                    Some(jacobian_trace(&r, &zt)?)
                } else {
                    None
                };
                (Some(r), div)
            }
        };
        Ok(FieldValues {
            grad_u,
            r,
            dt_u,
            lap_u,
            div_r,
        })
    }

    /// All K fields at `z`.
    pub fn evaluate_all(&self, z: &Tensor, t: f64, needs: Needs) -> Result<Vec<FieldValues>> {
        (0..self.k).map(|k| self.evaluate(k, z, t, needs)).collect()
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for k in 0..self.k {
            if let Potential::Mlp(m) = &self.potentials[k] {
                out.extend(m.parameters());
            }
            if let Rotational::Mlp(m) = &self.rotationals[k] {
                out.extend(m.parameters());
            }
        }
        out.push(&self.log_diffusion);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for (p, r) in self.potentials.iter_mut().zip(self.rotationals.iter_mut()) {
            if let Potential::Mlp(m) = p {
                out.extend(m.parameters_mut());
            }
            if let Rotational::Mlp(m) = r {
                out.extend(m.parameters_mut());
            }
        }
        out.push(&mut self.log_diffusion);
        out
    }
}

/// `Σ_i ∂g_i/∂z_i` per row for `g: [B × d]` computed from `z`.
fn jacobian_trace(g: &Tensor, z: &Tensor) -> Result<Tensor> {
    let (b, d) = g.dims2()?;
    let mut acc: Option<Tensor> = None;
    for i in 0..d {
        let gi = g.slice(1, i, 1)?.sum()?;
        let h = grad(&gi, &[z.clone()], true)?.remove(0);
        let term = h.slice(1, i, 1)?;
        acc = Some(match acc {
            Some(a) => a.add(&term)?,
            None => term,
        });
    }
    acc.expect("d >= 1").reshape(&[b])
}

fn hessian_trace(grad_u: &Tensor, z: &Tensor) -> Result<Tensor> {
    jacobian_trace(grad_u, z)
}

/// `∇_z u^k(z, t)` by reverse-mode autodiff with `create_graph`, `[B × d]`.
pub fn potential_gradient(bank: &FlowFieldBank, k: usize, z: &Tensor, t: f64) -> Result<Tensor> {
    let b = bank.check(k, z)?;
    let _g = set_grad_enabled(true);
    let zt = track(z);
    let u = bank.potential(k, &zt, &time_column(t, b))?.sum()?;
    Ok(grad(&u, &[zt], true)?.remove(0))
}

/// `∂_t u^k(z, t)` with t fed as a continuous input, `[B]`.
pub fn time_derivative(bank: &FlowFieldBank, k: usize, z: &Tensor, t: f64) -> Result<Tensor> {
    let b = bank.check(k, z)?;
    let _g = set_grad_enabled(true);
    let tt = time_column(t, b).requiring_grad();
    let u = bank.potential(k, z, &tt)?.sum()?;
    grad(&u, &[tt], true)?.remove(0).reshape(&[b])
}

/// Exact `∇·r^k(z)` by one backward pass per output coordinate, `[B]`.
pub fn divergence(bank: &FlowFieldBank, k: usize, z: &Tensor) -> Result<Tensor> {
    let b = bank.check(k, z)?;
    if !bank.has_rotational(k) {
        return Ok(Tensor::zeros(&[b]));
    }
    let _g = set_grad_enabled(true);
    let zt = track(z);
    let r = bank.rotational(k, &zt)?;
    jacobian_trace(&r, &zt)
}

/// Exact `∇²u^k(z, t)` by double backward, `[B]`.
pub fn laplacian(bank: &FlowFieldBank, k: usize, z: &Tensor, t: f64) -> Result<Tensor> {
    let b = bank.check(k, z)?;
    let _g = set_grad_enabled(true);
    let zt = track(z);
    let u = bank.potential(k, &zt, &time_column(t, b))?.sum()?;
    let gu = grad(&u, &[zt.clone()], true)?.remove(0);
    hessian_trace(&gu, &zt)
}

/// Hutchinson estimate of `∇·r^k(z)` with Rademacher probes.
/// Returns per-row means and standard errors.
pub fn hutchinson_divergence<R: Rng>(
    bank: &FlowFieldBank,
    k: usize,
    z: &Tensor,
    probes: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, d) = (bank.check(k, z)?, bank.d);
    if probes < 2 {
        return Err(StaError::Config("Hutchinson needs at least two probes".into()));
    }
    let _g = set_grad_enabled(true);
    let zt = track(z);
    let r = bank.rotational(k, &zt)?;
    let mut samples = vec![Vec::with_capacity(probes); b];
    for _ in 0..probes {
        let v: Vec<f64> = (0..b * d)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let vt = Tensor::from_vec(v.clone(), &[b, d])?;
        let jtv = grad(&r.mul(&vt)?.sum()?, &[zt.clone()], false)?.remove(0);
        for (row, s) in samples.iter_mut().enumerate() {
            let est: f64 = (0..d).map(|i| v[row * d + i] * jtv.data()[row * d + i]).sum();
            s.push(est);
        }
    }
    let n = probes as f64;
    let mut means = Vec::with_capacity(b);
    let mut errs = Vec::with_capacity(b);
    for s in samples {
        let mean = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        means.push(mean);
        errs.push((var / n).sqrt());
    }
    Ok((means, errs))
}

/// `z + Σ_k (c_pot_k ∇u^k + c_rot_k r^k)` with per-row coefficients `[B × K]`.
pub fn step_from_fields(z: &Tensor, fields: &[FieldValues], c_pot: &Tensor, c_rot: &Tensor) -> Result<Tensor> {
    let d = z.dims2()?.1;
    let mut out = z.clone();
    for (k, f) in fields.iter().enumerate() {
        out = out.add(&spread(&column(c_pot, k)?, d)?.mul(&f.grad_u)?)?;
        if let Some(r) = &f.r {
            out = out.add(&spread(&column(c_rot, k)?, d)?.mul(r)?)?;
        }
    }
    Ok(out)
}

fn check_codes(bank: &FlowFieldBank, z: &Tensor, codes: &[&Tensor]) -> Result<()> {
    let b = z.dims2()?.0;
    for c in codes {
        if c.shape() != [b, bank.k] {
            return Err(StaError::ShapeMismatch {
                op: "flow codes",
                lhs: vec![b, bank.k],
                rhs: c.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// One particle update `z + Σ_k g^k (∇u^k(z, t) + r^k(z))`, `g: [B × K]`.
pub fn flow_step(bank: &FlowFieldBank, z: &Tensor, g: &Tensor, t: f64) -> Result<Tensor> {
    check_codes(bank, z, &[g])?;
    let fields = bank.evaluate_all(z, t, Needs::default())?;
    step_from_fields(z, &fields, g, g)
}

/// Separate switches for the two parts: `z + Σ_k g̃^k (y1^k ∇u^k + y2^k r^k)`.
pub fn flow_step_separate(
    bank: &FlowFieldBank,
    z: &Tensor,
    g_tilde: &Tensor,
    y1: &Tensor,
    y2: &Tensor,
    t: f64,
) -> Result<Tensor> {
    check_codes(bank, z, &[g_tilde, y1, y2])?;
    let fields = bank.evaluate_all(z, t, Needs::default())?;
    step_from_fields(z, &fields, &g_tilde.mul(y1)?, &g_tilde.mul(y2)?)
}

/// `Σ_k c_k ∇²u^k` per row, from evaluated fields.
pub fn weighted_laplacian(fields: &[FieldValues], c_pot: &Tensor) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    for (k, f) in fields.iter().enumerate() {
        let lap = f
            .lap_u
            .as_ref()
            .ok_or_else(|| StaError::Config("laplacian was not evaluated".into()))?;
        let term = column(c_pot, k)?.mul(lap)?;
        acc = Some(match acc {
            Some(a) => a.add(&term)?,
            None => term,
        });
    }
    acc.ok_or_else(|| StaError::Config("no fields".into()))
}

/// `log q − Σ_k g^k ∇²u^k(z, t)`; `log_q: [B]`, `g: [B × K]`.
pub fn log_density_step(bank: &FlowFieldBank, log_q: &Tensor, z: &Tensor, g: &Tensor, t: f64) -> Result<Tensor> {
    check_codes(bank, z, &[g])?;
    let needs = Needs {
        laplacian: true,
        ..Needs::default()
    };
    let fields = bank.evaluate_all(z, t, needs)?;
    log_q.sub(&weighted_laplacian(&fields, g)?)
}

/// `Σ_k (c_k ∇·r^k)²` per row.
pub fn div_residual(fields: &[FieldValues], c_rot: &Tensor) -> Result<Tensor> {
    let b = c_rot.dims2()?.0;
    let mut acc = Tensor::zeros(&[b]);
    for (k, f) in fields.iter().enumerate() {
        if let Some(div) = &f.div_r {
            acc = acc.add(&column(c_rot, k)?.mul(div)?.square()?)?;
        }
    }
    Ok(acc)
}

/// `Σ_k |c_k| (∂_t u^k + ½‖∇u^k‖²)²` per row.
pub fn hj_residual(fields: &[FieldValues], c_pot: &Tensor) -> Result<Tensor> {
    let b = c_pot.dims2()?.0;
    let mut acc = Tensor::zeros(&[b]);
    for (k, f) in fields.iter().enumerate() {
        let dt = f
            .dt_u
            .as_ref()
            .ok_or_else(|| StaError::Config("time derivative was not evaluated".into()))?;
        let kinetic = f.grad_u.square()?.sum_axis(1)?.scale(0.5)?;
        let res = dt.add(&kinetic)?.square()?;
        acc = acc.add(&column(c_pot, k)?.abs()?.mul(&res)?)?;
    }
    Ok(acc)
}

/// Latent states `z_0..z_T` (each `[B × d]`) and tracked `log q(z_t)` (each `[B]`).
#[derive(Clone, Debug)]
pub struct LatentTrajectory {
    pub states: Vec<Tensor>,
    pub log_density: Vec<Tensor>,
    pub times: Vec<usize>,
}

impl LatentTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Rolls `z0` forward under `codes[t-1]` (each `[B × K]`) for t = 1..T.
    /// Step t evaluates the fields at `z_{t-1}` and time t.
    pub fn rollout(bank: &FlowFieldBank, z0: &Tensor, log_q0: &Tensor, codes: &[Tensor]) -> Result<Self> {
        let needs = Needs {
            laplacian: true,
            ..Needs::default()
        };
        let mut states = vec![z0.clone()];
        let mut log_density = vec![log_q0.clone()];
        for (i, g) in codes.iter().enumerate() {
            let z = &states[i];
            check_codes(bank, z, &[g])?;
            let fields = bank.evaluate_all(z, (i + 1) as f64, needs)?;
            let next = step_from_fields(z, &fields, g, g)?;
            let lq = log_density[i].sub(&weighted_laplacian(&fields, g)?)?;
            states.push(next);
            log_density.push(lq);
        }
        Ok(LatentTrajectory {
            states,
            log_density,
            times: (0..=codes.len()).collect(),
        })
    }
}

fn check_alignment(traj: &LatentTrajectory, codes: &[Tensor]) -> Result<()> {
    if traj.steps() != codes.len() || codes.is_empty() {
        return Err(StaError::Config(format!(
            "trajectory has {} steps but {} code rows",
            traj.steps(),
            codes.len()
        )));
    }
    Ok(())
}

/// `(1/T) Σ_t Σ_k (g_t^k ∇·r^k)²`, averaged over the batch.
pub fn loss_div(bank: &FlowFieldBank, traj: &LatentTrajectory, codes: &[Tensor]) -> Result<Tensor> {
    check_alignment(traj, codes)?;
    let needs = Needs {
        divergence: true,
        ..Needs::default()
    };
    let mut acc = Tensor::scalar(0.0);
    for (i, g) in codes.iter().enumerate() {
        let fields = bank.evaluate_all(&traj.states[i], (i + 1) as f64, needs)?;
        acc = acc.add(&div_residual(&fields, g)?.mean()?)?;
    }
    acc.scale(1.0 / codes.len() as f64)
}

/// `(1/T) Σ_t Σ_k |g_t^k| (∂_t u^k + ½‖∇u^k‖²)²`, averaged over the batch.
pub fn loss_hj(bank: &FlowFieldBank, traj: &LatentTrajectory, codes: &[Tensor]) -> Result<Tensor> {
    check_alignment(traj, codes)?;
    let needs = Needs {
        time_derivative: true,
        ..Needs::default()
    };
    let mut acc = Tensor::scalar(0.0);
    for (i, g) in codes.iter().enumerate() {
        let fields = bank.evaluate_all(&traj.states[i], (i + 1) as f64, needs)?;
        acc = acc.add(&hj_residual(&fields, g)?.mean()?)?;
    }
    acc.scale(1.0 / codes.len() as f64)
}

/// Log density of `N(0, (1 + 2e)·I)` at each row of `z: [B × d]`, where
/// `e: [B]` is the elapsed weighted diffusion `Σ_τ Σ_k g_τ^k D_k`.
pub fn prior_log_pdf(z: &Tensor, elapsed: &Tensor) -> Result<Tensor> {
    let (b, d) = z.dims2()?;
    if elapsed.shape() != [b] {
        return Err(StaError::ShapeMismatch {
            op: "prior_log_pdf",
            lhs: vec![b],
            rhs: elapsed.shape().to_vec(),
        });
    }
    if let Some(e) = elapsed.data().iter().find(|e| !(**e >= 0.0)) {
        return Err(StaError::Domain {
            op: "prior_log_pdf",
            reason: format!("elapsed diffusion {e} is negative"),
        });
    }
    let var = elapsed.scale(2.0)?.add_scalar(1.0)?;
    let sq = z.square()?.sum_axis(1)?;
    let norm = var.log()?.add_scalar((2.0 * PI).ln())?.scale(-0.5 * d as f64)?;
    norm.sub(&sq.div(&var)?.scale(0.5)?)
}

/// Scalar form of [`prior_log_pdf`] for a single point.
pub fn prior_log_pdf_value(z: &[f64], elapsed: f64) -> Result<f64> {
    if !(elapsed >= 0.0) {
        return Err(StaError::Domain {
            op: "prior_log_pdf",
            reason: format!("elapsed diffusion {elapsed} is negative"),
        });
    }
    let var = 1.0 + 2.0 * elapsed;
    let sq: f64 = z.iter().map(|v| v * v).sum();
    Ok(-0.5 * z.len() as f64 * (2.0 * PI * var).ln() - 0.5 * sq / var)
}

#[cfg(test)]
mod tests;
