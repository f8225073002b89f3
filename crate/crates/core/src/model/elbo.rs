use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{laplace_offsets, or_gate, StaModel};
use crate::error::{Result, StaError};
use crate::flows::{div_residual, hj_residual, prior_log_pdf, step_from_fields, weighted_laplacian, Needs};
use crate::priors::{gumbel_difference_noise, gumbel_sigmoid_with_noise, kl_bernoulli, kl_laplace, kl_part_split};
use crate::tensor::Tensor;
use crate::transforms::{Frame, SequenceBatch};

/// Training stage: the first trains spikes only (slab fixed at 1), the
/// second samples slabs as well.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn at(iteration: usize, stage1_iters: usize) -> Stage {
        if iteration < stage1_iters {
            Stage::One
        } else {
            Stage::Two
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// `B` sequences of `T + 1` frames, stored time-major: row `t·B + b` is
/// frame `t` of sequence `b`.
#[derive(Clone, Debug)]
pub struct FrameBatch {
    pub batch: usize,
    pub steps: usize,
    pub pixels: usize,
    rows: Tensor,
}

impl FrameBatch {
    pub fn from_sequences(data: &SequenceBatch, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(StaError::Config("empty batch".into()));
        }
        let (b, steps, p) = (indices.len(), data.steps(), data.pixels());
        let mut values = Vec::with_capacity(b * (steps + 1) * p);
        for t in 0..=steps {
            for &i in indices {
                if i >= data.len() {
                    return Err(StaError::OutOfRange(format!("sequence {i} of {}", data.len())));
                }
                values.extend_from_slice(data.frame_values(i, t));
            }
        }
        Ok(FrameBatch {
            batch: b,
            steps,
            pixels: p,
            rows: Tensor::from_vec(values, &[(steps + 1) * b, p])?,
        })
    }

    pub fn from_frames(sequences: &[Vec<Frame>]) -> Result<Self> {
        let first = sequences
            .first()
            .and_then(|s| s.first())
            .ok_or_else(|| StaError::Config("empty batch".into()))?;
        let (b, steps, p) = (sequences.len(), sequences[0].len() - 1, first.len());
        let mut values = Vec::with_capacity(b * (steps + 1) * p);
        for t in 0..=steps {
            for s in sequences {
                if s.len() != steps + 1 || s[t].len() != p {
                    return Err(StaError::Config("sequences in a batch must share length and frame size".into()));
                }
                values.extend_from_slice(&s[t].values);
            }
        }
        Ok(FrameBatch {
            batch: b,
            steps,
            pixels: p,
            rows: Tensor::from_vec(values, &[(steps + 1) * b, p])?,
        })
    }

    /// All frames, `[(T+1)·B × P]`.
    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    /// `[x_{t−1}; x_t]` for t = 1..T, `[T·B × 2P]`.
    pub fn pairs(&self) -> Result<Tensor> {
        let n = self.steps * self.batch;
        Tensor::concat(&[self.rows.slice(0, 0, n)?, self.rows.slice(0, self.batch, n)?], 1)
    }
}

/// Every random draw one ELBO evaluation consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboNoise {
    /// Standard normal, `[B × d]`.
    pub eps: Vec<f64>,
    /// Logistic noise for the spike samples, `[T·B × K]`.
    pub spikes: Vec<f64>,
    /// Logistic noise for the rotational spikes under separate controls.
    pub spikes_rot: Option<Vec<f64>>,
    /// Standard Laplace offsets `−sign(u)·ln(1 − 2|u|)`, `[T·B × K]`.
    pub slab: Vec<f64>,
}

impl ElboNoise {
    pub fn sample<R: Rng>(model: &StaModel, batch: usize, steps: usize, rng: &mut R) -> Self {
        let cfg = &model.config;
        let n = steps * batch * cfg.fields;
        let eps = (0..batch * cfg.latent_dim)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        let spikes = gumbel_difference_noise(n, rng);
        let spikes_rot = cfg.separate_controls.then(|| gumbel_difference_noise(n, rng));
        let slab = laplace_offsets(n, rng);
        ElboNoise {
            eps,
            spikes,
            spikes_rot,
            slab,
        }
    }
}

/// Per-sequence ELBO terms (batch averages). `total` is the weighted loss
/// that training minimizes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub recon: f64,
    pub kl_z0: f64,
    pub kl_z_path: f64,
    pub kl_spike_init: f64,
    pub kl_spike_trans: f64,
    pub kl_slab: f64,
    pub loss_div: f64,
    pub loss_hj: f64,
    pub total: f64,
}

impl ElboBreakdown {
    /// The unweighted bound `recon − Σ KL`, without the physics penalties.
    pub fn elbo(&self) -> f64 {
        self.recon - self.kl_z0 - self.kl_z_path - self.kl_spike_init - self.kl_spike_trans - self.kl_slab
    }

    pub fn is_finite(&self) -> bool {
        [
            self.recon,
            self.kl_z0,
            self.kl_z_path,
            self.kl_spike_init,
            self.kl_spike_trans,
            self.kl_slab,
            self.loss_div,
            self.loss_hj,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// The loss graph with its terms.
pub struct ElboGraph {
    pub breakdown: ElboBreakdown,
    pub loss: Tensor,
    /// Latent states `z_0..z_T`, each `[B × d]`.
    pub states: Vec<Tensor>,
    /// Spike posterior probabilities, `[T·B × K]`.
    pub spike_probs: Option<Tensor>,
}

/// `log N(μ + σε; μ, σ²)` per row: `−½ Σ log σ² − d/2 ln 2π − ½ Σ ε²`.
pub(crate) fn gaussian_log_q(logvar: &Tensor, eps: &[f64], rows: usize) -> Result<Tensor> {
    let d = logvar.dims2()?.1;
    let consts: Vec<f64> = eps
        .chunks_exact(d)
        .take(rows)
        .map(|e| -0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * e.iter().map(|v| v * v).sum::<f64>())
        .collect();
    logvar.sum_axis(1)?.scale(-0.5)?.add(&Tensor::from_vec(consts, &[rows])?)
}

fn value(t: &Tensor) -> f64 {
    t.item()
}

/// Builds the loss graph for `batch` with the given noise.
pub fn elbo_graph(model: &StaModel, batch: &FrameBatch, noise: &ElboNoise, stage: Stage) -> Result<ElboGraph> {
    let cfg = &model.config;
    let (b, steps, p) = (batch.batch, batch.steps, batch.pixels);
    let (d, k) = (cfg.latent_dim, cfg.fields);
    if p != cfg.pixels() {
        return Err(StaError::Incompatible(format!(
            "batch frames have {p} values, model expects {}",
            cfg.pixels()
        )));
    }
    let n = steps * b * k;
    if noise.eps.len() != b * d
        || noise.spikes.len() != n
        || noise.slab.len() != n
        || noise.spikes_rot.as_ref().map(Vec::len).unwrap_or(n) != n
        || noise.spikes_rot.is_some() != cfg.separate_controls
    {
        return Err(StaError::Config("noise does not match batch".into()));
    }
    let inv_b = 1.0 / b as f64;

    let x0 = batch.rows.slice(0, 0, b)?;
    let (mu, logvar) = model.encode_rows(&x0)?;
    let z0 = mu.add(&logvar.scale(0.5)?.exp()?.mask(noise.eps.clone())?)?;
    let kl_z0 = mu
        .square()?
        .add(&logvar.exp()?)?
        .sub(&logvar)?
        .add_scalar(-1.0)?
        .sum()?
        .scale(0.5 * inv_b)?;
    let mut log_q = gaussian_log_q(&logvar, &noise.eps, b)?;

    let zero = Tensor::scalar(0.0);
    let (mut kl_path, mut kl_init, mut kl_trans, mut kl_slab) = (zero.clone(), zero.clone(), zero.clone(), zero.clone());
    let (mut div_sum, mut hj_sum) = (zero.clone(), zero.clone());
    let mut states = vec![z0];
    let mut spike_probs = None;

    if steps > 0 {
        let heads = model.code_heads(&batch.pairs()?)?;
        let y_pot = gumbel_sigmoid_with_noise(&heads.spike_logits, &noise.spikes, cfg.tau, cfg.hard_spikes)?;
        let q_pot = heads.spike_logits.sigmoid()?;
        let (y, q, y_rot, q_parts) = match (&heads.spike_logits_rot, &noise.spikes_rot) {
            (Some(l), Some(nr)) => {
                let y_rot = gumbel_sigmoid_with_noise(l, nr, cfg.tau, cfg.hard_spikes)?;
                let q_rot = l.sigmoid()?;
                let q = or_gate(&q_pot, &q_rot)?;
                (or_gate(&y_pot, &y_rot)?, q, Some(y_rot), Some((q_pot, q_rot)))
            }
            _ => (y_pot.clone(), q_pot, None, None),
        };
        let g_tilde = match stage {
            Stage::One => Tensor::ones(&[steps * b, k]),
            Stage::Two => {
                kl_slab = kl_laplace(&heads.slab_loc, &heads.slab_scale, cfg.slab.mu, cfg.slab.lambda)?.scale(inv_b)?;
                heads.slab_loc.add(&heads.slab_scale.mask(noise.slab.clone())?)?
            }
        };
        let g = g_tilde.mul(&y)?;
        let (c_pot, c_rot) = match &y_rot {
            Some(r) => (g_tilde.mul(&y_pot)?, g_tilde.mul(r)?),
            None => (g.clone(), g.clone()),
        };

        let spike = &cfg.spike;
        let q1 = q.slice(0, 0, b)?;
        kl_init = kl_bernoulli(&q1, &Tensor::full(&[b, k], spike.p1))?.scale(inv_b)?;
        if steps > 1 {
            let rest = (steps - 1) * b;
            let prior = y
                .slice(0, 0, rest)?
                .scale(spike.p_stay_on - spike.p_turn_on)?
                .add_scalar(spike.p_turn_on)?;
            kl_trans = kl_bernoulli(&q.slice(0, b, rest)?, &prior)?.scale(inv_b)?;
        }
        // which parts an active spike switches on
        if let Some((q1, q2)) = &q_parts {
            let split = |start: usize, len: usize| kl_part_split(&q1.slice(0, start, len)?, &q2.slice(0, start, len)?);
            kl_init = kl_init.add(&split(0, b)?.scale(inv_b)?)?;
            if steps > 1 {
                kl_trans = kl_trans.add(&split(b, (steps - 1) * b)?.scale(inv_b)?)?;
            }
        }

        let needs = Needs {
            laplacian: true,
            time_derivative: cfg.w_hj > 0.0,
            divergence: cfg.w_div > 0.0,
        };
        let diffusion = model.flows.diffusion()?.reshape(&[k, 1])?;
        let mut elapsed = Tensor::zeros(&[b]);
        for t in 1..=steps {
            let rows = |m: &Tensor| m.slice(0, (t - 1) * b, b);
            let (cp, cr) = (rows(&c_pot)?, rows(&c_rot)?);
            let z = &states[t - 1];
            let fields = model.flows.evaluate_all(z, t as f64, needs)?;
            let next = step_from_fields(z, &fields, &cp, &cr)?;
            log_q = log_q.sub(&weighted_laplacian(&fields, &cp)?)?;
            elapsed = elapsed.add(&rows(&g)?.abs()?.matmul(&diffusion)?.reshape(&[b])?)?;
            let log_p = prior_log_pdf(&next, &elapsed)?;
            kl_path = kl_path.add(&log_q.sub(&log_p)?.sum()?)?;
            if needs.divergence {
                div_sum = div_sum.add(&div_residual(&fields, &cr)?.sum()?)?;
            }
            if needs.time_derivative {
                hj_sum = hj_sum.add(&hj_residual(&fields, &cp)?.sum()?)?;
            }
            states.push(next);
        }
        kl_path = kl_path.scale(inv_b)?;
        let per_step = inv_b / steps as f64;
        div_sum = div_sum.scale(per_step)?;
        hj_sum = hj_sum.scale(per_step)?;
        spike_probs = Some(q);
    }

    let z_all = Tensor::concat(&states, 0)?;
    let x_hat = model.decode_rows(&z_all)?;
    let frames = (steps + 1) as f64;
    let recon = batch
        .rows
        .sub(&x_hat)?
        .square()?
        .sum()?
        .scale(-0.5 * inv_b)?
        .add_scalar(-0.5 * frames * p as f64 * (2.0 * PI).ln())?;

    let w = &cfg.beta;
    let terms = [
        (&recon, -w.recon),
        (&kl_z0, w.kl_z0),
        (&kl_path, w.kl_z_path),
        (&kl_init, w.kl_spike_init),
        (&kl_trans, w.kl_spike_trans),
        (&kl_slab, w.kl_slab),
        (&div_sum, cfg.w_div),
        (&hj_sum, cfg.w_hj),
    ];
    let mut loss = Tensor::scalar(0.0);
    for (term, weight) in terms {
        if weight != 0.0 {
            loss = loss.add(&term.scale(weight)?)?;
        }
    }
    let breakdown = ElboBreakdown {
        recon: value(&recon),
        kl_z0: value(&kl_z0),
        kl_z_path: value(&kl_path),
        kl_spike_init: value(&kl_init),
        kl_spike_trans: value(&kl_trans),
        kl_slab: value(&kl_slab),
        loss_div: value(&div_sum),
        loss_hj: value(&hj_sum),
        total: value(&loss),
    };
    Ok(ElboGraph {
        breakdown,
        loss,
        states,
        spike_probs,
    })
}

/// Draws fresh noise from `rng` and evaluates the ELBO terms.
pub fn elbo<R: Rng>(model: &StaModel, batch: &FrameBatch, rng: &mut R, stage: Stage) -> Result<ElboBreakdown> {
    let noise = ElboNoise::sample(model, batch.batch, batch.steps, rng);
    let _g = crate::tensor::no_grad();
    Ok(elbo_graph(model, batch, &noise, stage)?.breakdown)
}
