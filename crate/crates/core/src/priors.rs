//! Spike-and-slab temporal prior.
//!
//! Spikes follow an independent two-state Markov chain per field: on with
//! probability `p1` at the first step, then `p_turn_on` from off and
//! `p_stay_on` from on. Slabs are i.i.d. Laplace. The KL helpers take tensors
//! so they can sit inside the ELBO graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::tensor::Tensor;

/// Probability clamp used before taking logs.
pub const PROB_EPS: f64 = 1e-7;
/// Resampling attempts for one all-zero spike row before giving up.
pub const MAX_REJECTIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeChainConfig {
    pub k: usize,
    pub p1: f64,
    pub p_turn_on: f64,
    pub p_stay_on: f64,
    pub reject_all_zero: bool,
}

impl SpikeChainConfig {
    pub fn new(k: usize) -> Self {
        SpikeChainConfig {
            k,
            p1: 0.1,
            p_turn_on: 0.1,
            p_stay_on: 0.9,
            reject_all_zero: true,
        }
    }

    /// Probabilities may sit on the closed interval so absorbing chains can be
    /// expressed; the KL terms clamp them anyway.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(StaError::Config("spike chain needs k >= 1".into()));
        }
        for (name, p) in [
            ("p1", self.p1),
            ("p_turn_on", self.p_turn_on),
            ("p_stay_on", self.p_stay_on),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(StaError::Config(format!("{name}={p} is not a probability")));
            }
        }
        if self.p_stay_on <= self.p_turn_on {
            return Err(StaError::Config(format!(
                "p_stay_on ({}) must exceed p_turn_on ({})",
                self.p_stay_on, self.p_turn_on
            )));
        }
        Ok(())
    }

    /// Bernoulli parameter of the transition prior given the previous spike.
    /// Relaxed spikes in (0, 1) interpolate linearly between the two rates.
    pub fn transition_prob(&self, prev: f64) -> f64 {
        self.p_turn_on + (self.p_stay_on - self.p_turn_on) * prev
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabConfig {
    pub mu: f64,
    pub lambda: f64,
}

impl Default for SlabConfig {
    fn default() -> Self {
        SlabConfig {
            mu: 1.0,
            lambda: 0.3,
        }
    }
}

impl SlabConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.mu.is_finite() {
            return Err(StaError::Config(format!(
                "slab needs finite mu and lambda > 0, got ({}, {})",
                self.mu, self.lambda
            )));
        }
        Ok(())
    }
}

/// Transformation codes for a whole sequence, stored row-major `steps × k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeSlabCode {
    pub steps: usize,
    pub k: usize,
    pub y: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub g: Vec<f64>,
}

impl SpikeSlabCode {
    pub fn new(k: usize, y: Vec<f64>, g_tilde: Vec<f64>) -> Result<Self> {
        if k == 0 || y.len() != g_tilde.len() || y.len() % k != 0 {
            return Err(StaError::InvalidShape {
                shape: vec![y.len(), g_tilde.len()],
                reason: format!("spike and slab must both be steps × {k}"),
            });
        }
        let g = y.iter().zip(&g_tilde).map(|(a, b)| a * b).collect();
        Ok(SpikeSlabCode {
            steps: y.len() / k,
            k,
            y,
            g_tilde,
            g,
        })
    }

    pub fn from_path(path: &[Vec<bool>], g_tilde: Vec<f64>) -> Result<Self> {
        let k = path.first().map_or(0, Vec::len);
        let y = path
            .iter()
            .flat_map(|row| row.iter().map(|&b| if b { 1.0 } else { 0.0 }))
            .collect();
        SpikeSlabCode::new(k, y, g_tilde)
    }

    pub fn row_g(&self, t: usize) -> &[f64] {
        &self.g[t * self.k..(t + 1) * self.k]
    }

    pub fn row_y(&self, t: usize) -> &[f64] {
        &self.y[t * self.k..(t + 1) * self.k]
    }

    pub fn row_g_tilde(&self, t: usize) -> &[f64] {
        &self.g_tilde[t * self.k..(t + 1) * self.k]
    }

    /// `g = y·g̃` holds and spikes are probabilities.
    pub fn is_consistent(&self) -> bool {
        self.y.iter().all(|v| (0.0..=1.0).contains(v))
            && self
                .y
                .iter()
                .zip(&self.g_tilde)
                .zip(&self.g)
                .all(|((y, gt), g)| y * gt == *g)
    }
}

fn sample_row<R: Rng>(probs: &[f64], reject_all_zero: bool, rng: &mut R) -> Result<Vec<bool>> {
    for _ in 0..MAX_REJECTIONS {
        let row: Vec<bool> = probs.iter().map(|&p| rng.random::<f64>() < p).collect();
        if !reject_all_zero || row.iter().any(|&b| b) {
            return Ok(row);
        }
    }
    Err(StaError::Config(format!(
        "no non-zero spike row after {MAX_REJECTIONS} draws (probabilities {probs:?})"
    )))
}

/// Samples a `steps × k` binary spike path from the Markov chain prior.
pub fn sample_spike_path<R: Rng>(
    cfg: &SpikeChainConfig,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<bool>>> {
    sample_spike_path_from(cfg, None, steps, rng)
}

/// As [`sample_spike_path`], optionally pinning the first row.
pub fn sample_spike_path_from<R: Rng>(
    cfg: &SpikeChainConfig,
    first: Option<&[bool]>,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<Vec<bool>>> {
    cfg.validate()?;
    if steps == 0 {
        return Err(StaError::Config("spike path needs at least one step".into()));
    }
    let mut path = Vec::with_capacity(steps);
    let row0 = match first {
        Some(r) if r.len() == cfg.k => r.to_vec(),
        Some(r) => {
            return Err(StaError::Config(format!(
                "initial spike row has length {}, expected {}",
                r.len(),
                cfg.k
            )))
        }
        None => sample_row(&vec![cfg.p1; cfg.k], cfg.reject_all_zero, rng)?,
    };
    path.push(row0);
    for t in 1..steps {
        let probs: Vec<f64> = path[t - 1]
            .iter()
            .map(|&on| if on { cfg.p_stay_on } else { cfg.p_turn_on })
            .collect();
        path.push(sample_row(&probs, cfg.reject_all_zero, rng)?);
    }
    Ok(path)
}

/// One Laplace(μ, λ) draw by inverse CDF.
pub fn sample_laplace<R: Rng>(mu: f64, lambda: f64, rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return mu - lambda * u.signum() * tail.ln();
        }
    }
}

/// `steps × k` i.i.d. slab draws, row-major.
pub fn sample_slab<R: Rng>(cfg: &SlabConfig, steps: usize, k: usize, rng: &mut R) -> Vec<f64> {
    (0..steps * k)
        .map(|_| sample_laplace(cfg.mu, cfg.lambda, rng))
        .collect()
}

/// Σ KL(Ber(q) ‖ Ber(p)) with both sides clamped to [ε, 1-ε].
pub fn kl_bernoulli(q: &Tensor, p: &Tensor) -> Result<Tensor> {
    let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let one_q = q.neg()?.add_scalar(1.0)?;
    let one_p = p.neg()?.add_scalar(1.0)?;
    let on = q.mul(&q.log()?.sub(&p.log()?)?)?;
    let off = one_q.mul(&one_q.log()?.sub(&one_p.log()?)?)?;
    on.add(&off)?.sum()
}

/// Extra spike KL under separate controls. Given an active spike the prior
/// picks the part pattern (y1, y2) uniformly from {10, 01, 11}; with
/// independent posteriors `q1`, `q2` this returns
/// `Σ q_or · KL(q(y1, y2 | on) ‖ uniform)`, so that together with
/// `kl_bernoulli(q_or, p)` it is the KL of the joint switch pair.
pub fn kl_part_split(q1: &Tensor, q2: &Tensor) -> Result<Tensor> {
    let q1 = q1.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let q2 = q2.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let n1 = q1.neg()?.add_scalar(1.0)?;
    let n2 = q2.neg()?.add_scalar(1.0)?;
    let parts = [q1.mul(&n2)?, n1.mul(&q2)?, q1.mul(&q2)?];
    let on = parts[0].add(&parts[1])?.add(&parts[2])?;
    let log_on = on.log()?;
    let mut acc = on.scale(3f64.ln())?;
    for x in &parts {
        acc = acc.add(&x.mul(&x.log()?.sub(&log_on)?)?)?;
    }
    acc.sum()
}

/// Closed-form KL(Laplace(μq, bq) ‖ Laplace(μp, bp)) for plain numbers.
pub fn kl_laplace_scalar(mu_q: f64, b_q: f64, mu_p: f64, b_p: f64) -> Result<f64> {
    if !(b_q > 0.0 && b_p > 0.0) {
        return Err(StaError::Domain {
            op: "kl_laplace",
            reason: format!("scales must be positive, got {b_q} and {b_p}"),
        });
    }
    let d = (mu_q - mu_p).abs();
    Ok((b_p / b_q).ln() + (b_q * (-d / b_q).exp() + d) / b_p - 1.0)
}

/// Σ KL(Laplace(μq, bq) ‖ Laplace(μp, bp)) over the elements of `mu_q`/`b_q`.
pub fn kl_laplace(mu_q: &Tensor, b_q: &Tensor, mu_p: f64, b_p: f64) -> Result<Tensor> {
    if !(b_p > 0.0) || b_q.data().iter().any(|&b| !(b > 0.0)) {
        return Err(StaError::Domain {
            op: "kl_laplace",
            reason: "scales must be positive".into(),
        });
    }
    let d = mu_q.add_scalar(-mu_p)?.abs()?;
    let decay = d.div(b_q)?.neg()?.exp()?.mul(b_q)?;
    let log_ratio = b_q.log()?.neg()?.add_scalar(b_p.ln())?;
    log_ratio
        .add(&decay.add(&d)?.scale(1.0 / b_p)?)?
        .add_scalar(-1.0)?
        .sum()
}

/// Logistic noise `G₁ − G₂` with `G₁, G₂` i.i.d. standard Gumbel.
pub fn gumbel_difference_noise<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut gumbel = || loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u.ln()).ln();
        }
    };
    (0..n).map(|_| gumbel() - gumbel()).collect()
}

/// Relaxed Bernoulli sample `sigmoid((logits + G₁ − G₂)/τ)`.
///
/// With `hard`, the forward value is rounded to {0, 1} while the gradient is
/// that of the soft sample.
pub fn gumbel_sigmoid<R: Rng>(logits: &Tensor, tau: f64, hard: bool, rng: &mut R) -> Result<Tensor> {
    let noise = gumbel_difference_noise(logits.numel(), rng);
    gumbel_sigmoid_with_noise(logits, &noise, tau, hard)
}

pub fn gumbel_sigmoid_with_noise(logits: &Tensor, noise: &[f64], tau: f64, hard: bool) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(StaError::Domain {
            op: "gumbel_sigmoid",
            reason: format!("temperature must be positive, got {tau}"),
        });
    }
    let noise = Tensor::from_vec(noise.to_vec(), logits.shape())?;
    let soft = logits.add(&noise)?.scale(1.0 / tau)?.sigmoid()?;
    if !hard {
        return Ok(soft);
    }
    let rounded: Vec<f64> = soft
        .data()
        .iter()
        .map(|&v| if v > 0.5 { 1.0 } else { 0.0 })
        .collect();
    soft.sub(&soft.detach())?
        .add(&Tensor::from_vec(rounded, logits.shape())?)
}
