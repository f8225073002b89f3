//! The sequence VAE: encoder for `z₀`, decoder, code network on frame pairs,
//! the flow-field bank, ELBO assembly and the two-stage trainer.

mod elbo;
mod train;

#[cfg(test)]
mod tests;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::flows::{step_from_fields, FlowConfig, FlowFieldBank, LatentTrajectory, Needs};
use crate::nn::{Activation, Mlp};
use crate::priors::{gumbel_sigmoid, SlabConfig, SpikeChainConfig, SpikeSlabCode};
use crate::tensor::container::{NamedTensor, TensorFile};
use crate::tensor::{no_grad, Parameter, Tensor};
use crate::transforms::{Canvas, Frame};

pub use elbo::{elbo, elbo_graph, ElboBreakdown, ElboGraph, ElboNoise, FrameBatch, Stage};
pub use train::{
    load_checkpoint, metrics_digest, save_checkpoint, train, Checkpoint, MetricsRow, TrainData, TrainOptions,
    TrainOutcome, CHECKPOINT_FORMAT, METRICS_HEADER,
};

/// Multipliers on the individual ELBO terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ElboWeights {
    pub recon: f64,
    pub kl_z0: f64,
    pub kl_z_path: f64,
    pub kl_spike_init: f64,
    pub kl_spike_trans: f64,
    pub kl_slab: f64,
}

impl Default for ElboWeights {
    fn default() -> Self {
        ElboWeights {
            recon: 1.0,
            kl_z0: 1.0,
            kl_z_path: 1.0,
            kl_spike_init: 1.0,
            kl_spike_trans: 1.0,
            kl_slab: 1.0,
        }
    }
}

impl ElboWeights {
    fn values(&self) -> [(&'static str, f64); 6] {
        [
            ("recon", self.recon),
            ("kl_z0", self.kl_z0),
            ("kl_z_path", self.kl_z_path),
            ("kl_spike_init", self.kl_spike_init),
            ("kl_spike_trans", self.kl_spike_trans),
            ("kl_slab", self.kl_slab),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaConfig {
    pub latent_dim: usize,
    pub fields: usize,
    pub steps: usize,
    pub canvas: Canvas,
    /// Width of the two hidden layers of encoder, decoder and code network.
    pub hidden: usize,
    pub flow_hidden: usize,
    pub embed_dim: usize,
    pub rotational: bool,
    pub diffusion_init: f64,
    pub beta: ElboWeights,
    pub w_div: f64,
    pub w_hj: f64,
    pub tau: f64,
    pub hard_spikes: bool,
    pub stage1_iters: usize,
    pub stage2_iters: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub separate_controls: bool,
    pub spike: SpikeChainConfig,
    pub slab: SlabConfig,
    pub seed: u64,
    pub log_every: usize,
    pub checkpoint_every: usize,
}

impl Default for StaConfig {
    fn default() -> Self {
        StaConfig {
            latent_dim: 8,
            fields: 2,
            steps: 8,
            canvas: Canvas::default(),
            hidden: 256,
            flow_hidden: 128,
            embed_dim: 16,
            rotational: true,
            diffusion_init: 0.01,
            beta: ElboWeights::default(),
            w_div: 0.1,
            w_hj: 0.1,
            tau: 0.5,
            hard_spikes: false,
            stage1_iters: 2000,
            stage2_iters: 2000,
            lr: 1e-4,
            batch_size: 32,
            separate_controls: false,
            spike: SpikeChainConfig::new(2),
            slab: SlabConfig::default(),
            seed: 42,
            log_every: 1,
            checkpoint_every: 500,
        }
    }
}

impl StaConfig {
    /// Defaults with `d`, `K` and `T` set (the spike chain follows `K`).
    pub fn new(latent_dim: usize, fields: usize, steps: usize) -> Self {
        StaConfig {
            latent_dim,
            fields,
            steps,
            spike: SpikeChainConfig::new(fields),
            ..StaConfig::default()
        }
    }

    pub fn pixels(&self) -> usize {
        self.canvas.pixels()
    }

    pub fn total_iters(&self) -> usize {
        self.stage1_iters + self.stage2_iters
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("latent_dim", self.latent_dim),
            ("fields", self.fields),
            ("hidden", self.hidden),
            ("flow_hidden", self.flow_hidden),
            ("batch_size", self.batch_size),
            ("log_every", self.log_every),
            ("checkpoint_every", self.checkpoint_every),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(StaError::Config(format!("{name} must be positive")));
            }
        }
        if self.canvas.pixels() == 0 {
            return Err(StaError::Config("empty canvas".into()));
        }
        if self.embed_dim == 0 || self.embed_dim % 2 != 0 {
            return Err(StaError::Config(format!("embed_dim {} must be even and positive", self.embed_dim)));
        }
        let rates = [
            ("tau", self.tau),
            ("lr", self.lr),
            ("diffusion_init", self.diffusion_init),
        ];
        for (name, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(StaError::Config(format!("{name}={v} must be positive")));
            }
        }
        let mut weights = self.beta.values().to_vec();
        weights.extend([("w_div", self.w_div), ("w_hj", self.w_hj)]);
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(StaError::Config(format!("weight {name}={v} must be nonnegative")));
            }
        }
        if self.spike.k != self.fields {
            return Err(StaError::Config(format!(
                "spike chain has k = {} but the model has {} fields",
                self.spike.k, self.fields
            )));
        }
        self.spike.validate()?;
        self.slab.validate()
    }

    fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            latent_dim: self.latent_dim,
            fields: self.fields,
            hidden: self.flow_hidden,
            embed_dim: self.embed_dim,
            rotational: self.rotational,
            diffusion_init: self.diffusion_init,
        }
    }

    /// Output width of the code network: spike logits, slab location and
    /// slab log-scale, plus a second set of spike logits with separate controls.
    pub fn code_width(&self) -> usize {
        self.fields * if self.separate_controls { 4 } else { 3 }
    }
}

/// `y1 + y2 − y1·y2`, a differentiable OR for values in [0, 1].
pub fn or_gate(y1: &Tensor, y2: &Tensor) -> Result<Tensor> {
    y1.add(y2)?.sub(&y1.mul(y2)?)
}

#[derive(Clone, Debug)]
pub struct StaModel {
    pub config: StaConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub code_net: Mlp,
    pub flows: FlowFieldBank,
}

/// Code-network outputs for a batch of frame pairs, each `[N × K]`.
#[derive(Clone, Debug)]
pub struct CodeHeads {
    pub spike_logits: Tensor,
    /// Rotational-part spike logits when controls are separate.
    pub spike_logits_rot: Option<Tensor>,
    pub slab_loc: Tensor,
    pub slab_scale: Tensor,
}

impl CodeHeads {
    /// Posterior spike probability; with separate controls the OR of both parts.
    pub fn spike_probs(&self) -> Result<Tensor> {
        let q = self.spike_logits.sigmoid()?;
        match &self.spike_logits_rot {
            Some(l) => or_gate(&q, &l.sigmoid()?),
            None => Ok(q),
        }
    }
}

/// Log-scale offsets are clipped to keep `exp` finite early in training.
const LOG_SCALE_RANGE: (f64, f64) = (-12.0, 4.0);

impl StaModel {
    pub fn new<R: Rng>(config: StaConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (p, h, d) = (config.pixels(), config.hidden, config.latent_dim);
        let encoder = Mlp::new("encoder", &[p, h, h, 2 * d], Activation::Relu, rng)?;
        let decoder = Mlp::new("decoder", &[d, h, h, p], Activation::Relu, rng)?;
        let code_net = Mlp::new("code", &[2 * p, h, h, config.code_width()], Activation::Relu, rng)?;
        let flows = FlowFieldBank::new(&config.flow_config(), rng)?;
        Ok(StaModel {
            config,
            encoder,
            decoder,
            code_net,
            flows,
        })
    }

    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.encoder.parameters();
        out.extend(self.decoder.parameters());
        out.extend(self.code_net.parameters());
        out.extend(self.flows.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.encoder.parameters_mut();
        out.extend(self.decoder.parameters_mut());
        out.extend(self.code_net.parameters_mut());
        out.extend(self.flows.parameters_mut());
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.parameters().iter().map(|p| p.name.clone()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.tensor.numel()).sum()
    }

    fn check_rows(&self, x: &Tensor, width: usize, op: &'static str) -> Result<usize> {
        let (n, w) = x.dims2()?;
        if w != width {
            return Err(StaError::ShapeMismatch {
                op,
                lhs: vec![n, width],
                rhs: x.shape().to_vec(),
            });
        }
        Ok(n)
    }

    /// `(μ, log σ²)` for frames `[N × P]`, each `[N × d]`.
    pub fn encode_rows(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_rows(x, self.config.pixels(), "encode")?;
        let out = self.encoder.forward(x)?;
        let d = self.config.latent_dim;
        Ok((out.slice(1, 0, d)?, out.slice(1, d, d)?))
    }

    /// Mean frames `sigmoid(decoder(z))`, `[N × P]`.
    pub fn decode_rows(&self, z: &Tensor) -> Result<Tensor> {
        self.check_rows(z, self.config.latent_dim, "decode")?;
        self.decoder.forward(z)?.sigmoid()
    }

    /// Code heads for frame pairs `[N × 2P]` (previous frame first).
    pub fn code_heads(&self, pairs: &Tensor) -> Result<CodeHeads> {
        self.check_rows(pairs, 2 * self.config.pixels(), "code network")?;
        let k = self.config.fields;
        let out = self.code_net.forward(pairs)?;
        let slab = &self.config.slab;
        let log_scale = out
            .slice(1, 2 * k, k)?
            .clamp(LOG_SCALE_RANGE.0, LOG_SCALE_RANGE.1)?
            .add_scalar(slab.lambda.ln())?;
        Ok(CodeHeads {
            spike_logits: out.slice(1, 0, k)?,
            spike_logits_rot: if self.config.separate_controls {
                Some(out.slice(1, 3 * k, k)?)
            } else {
                None
            },
            slab_loc: out.slice(1, k, k)?.add_scalar(slab.mu)?,
            slab_scale: log_scale.exp()?,
        })
    }

    fn frame_row(&self, frame: &Frame) -> Result<Tensor> {
        let c = self.config.canvas;
        if (frame.channels, frame.height, frame.width) != (c.channels, c.height, c.width) {
            return Err(StaError::Incompatible(format!(
                "frame is {}×{}×{}, model expects {}×{}×{}",
                frame.height, frame.width, frame.channels, c.height, c.width, c.channels
            )));
        }
        Tensor::from_vec(frame.values.clone(), &[1, c.pixels()])
    }

    fn frame_from_row(&self, values: Vec<f64>) -> Result<Frame> {
        let c = self.config.canvas;
        Frame::from_values(c.channels, c.height, c.width, values)
    }

    /// Decodes each row of `z: [N × d]` into a frame.
    pub fn decode_frames(&self, z: &Tensor) -> Result<Vec<Frame>> {
        let _g = no_grad();
        let x = self.decode_rows(z)?;
        let p = self.config.pixels();
        x.data()
            .chunks_exact(p)
            .map(|r| self.frame_from_row(r.to_vec()))
            .collect()
    }

    /// Saves parameters (and optional extra tensors) with JSON metadata.
    pub(crate) fn to_file(&self, metadata: String, extra: Vec<NamedTensor>) -> TensorFile {
        let mut tensors: Vec<NamedTensor> = self
            .parameters()
            .iter()
            .map(|p| NamedTensor::from_tensor(p.name.clone(), &p.tensor))
            .collect();
        tensors.extend(extra);
        TensorFile { metadata, tensors }
    }

    /// Copies every parameter from `file`, checking names and shapes.
    pub(crate) fn load_parameters(&mut self, file: &TensorFile) -> Result<()> {
        for p in self.parameters_mut() {
            let t = file
                .get(&p.name)
                .ok_or_else(|| StaError::Format(format!("missing parameter '{}'", p.name)))?;
            if t.shape != p.tensor.shape() {
                return Err(StaError::Incompatible(format!(
                    "parameter '{}' has shape {:?} in file, {:?} in model",
                    p.name,
                    t.shape,
                    p.tensor.shape()
                )));
            }
            p.set_data(t.data.clone())?;
        }
        Ok(())
    }
}

/// Posterior over `z₀` for a single frame.
pub fn encode(model: &StaModel, x0: &Frame) -> Result<(Vec<f64>, Vec<f64>)> {
    let _g = no_grad();
    let (mu, logvar) = model.encode_rows(&model.frame_row(x0)?)?;
    Ok((mu.to_vec(), logvar.to_vec()))
}

/// One sampled code for a frame pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeSample {
    pub y: Vec<f64>,
    pub spike_probs: Vec<f64>,
    pub g_tilde: Vec<f64>,
    pub slab_loc: Vec<f64>,
    pub slab_scale: Vec<f64>,
    /// `y ⊙ g̃`.
    pub g: Vec<f64>,
    /// Per-part switches when controls are separate: (potential, rotational).
    pub parts: Option<(Vec<f64>, Vec<f64>)>,
}

/// Laplace reparameterization `loc − scale·sign(u)·ln(1 − 2|u|)`.
pub(crate) fn laplace_offsets<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let u: f64 = rng.random::<f64>() - 0.5;
            if u.abs() < 0.5 {
                break -u.signum() * (1.0 - 2.0 * u.abs()).ln();
            }
        })
        .collect()
}

fn sample_from_heads<R: Rng>(model: &StaModel, heads: &CodeHeads, rng: &mut R) -> Result<CodeSampleTensors> {
    let cfg = &model.config;
    let y_pot = gumbel_sigmoid(&heads.spike_logits, cfg.tau, cfg.hard_spikes, rng)?;
    let y_rot = match &heads.spike_logits_rot {
        Some(l) => Some(gumbel_sigmoid(l, cfg.tau, cfg.hard_spikes, rng)?),
        None => None,
    };
    let w = laplace_offsets(heads.slab_loc.numel(), rng);
    let g_tilde = heads.slab_loc.add(&heads.slab_scale.mask(w)?)?;
    Ok(CodeSampleTensors { y_pot, y_rot, g_tilde })
}

struct CodeSampleTensors {
    y_pot: Tensor,
    y_rot: Option<Tensor>,
    g_tilde: Tensor,
}

impl CodeSampleTensors {
    fn y(&self) -> Result<Tensor> {
        match &self.y_rot {
            Some(r) => or_gate(&self.y_pot, r),
            None => Ok(self.y_pot.clone()),
        }
    }

    /// Coefficients on the potential and rotational parts.
    fn coefficients(&self) -> Result<(Tensor, Tensor)> {
        match &self.y_rot {
            Some(r) => Ok((self.g_tilde.mul(&self.y_pot)?, self.g_tilde.mul(r)?)),
            None => {
                let g = self.g_tilde.mul(&self.y_pot)?;
                Ok((g.clone(), g))
            }
        }
    }
}

fn pair_row(model: &StaModel, prev: &Frame, cur: &Frame) -> Result<Tensor> {
    Tensor::concat(&[model.frame_row(prev)?, model.frame_row(cur)?], 1)
}

/// Samples the spike-and-slab code for the transition `x_prev → x_cur`.
pub fn infer_codes<R: Rng>(model: &StaModel, x_prev: &Frame, x_cur: &Frame, rng: &mut R) -> Result<CodeSample> {
    let _g = no_grad();
    let heads = model.code_heads(&pair_row(model, x_prev, x_cur)?)?;
    let s = sample_from_heads(model, &heads, rng)?;
    let y = s.y()?;
    Ok(CodeSample {
        g: s.g_tilde.mul(&y)?.to_vec(),
        y: y.to_vec(),
        spike_probs: heads.spike_probs()?.to_vec(),
        g_tilde: s.g_tilde.to_vec(),
        slab_loc: heads.slab_loc.to_vec(),
        slab_scale: heads.slab_scale.to_vec(),
        parts: s.y_rot.as_ref().map(|r| (s.y_pot.to_vec(), r.to_vec())),
    })
}

/// Everything produced by running the model along one sequence.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub trajectory: LatentTrajectory,
    /// Sampled codes for steps 1..T.
    pub codes: Vec<CodeSample>,
    pub reconstructions: Vec<Frame>,
}

impl Rollout {
    pub fn code(&self, k: usize) -> Result<SpikeSlabCode> {
        let y = self.codes.iter().flat_map(|c| c.y.clone()).collect();
        let g = self.codes.iter().flat_map(|c| c.g_tilde.clone()).collect();
        SpikeSlabCode::new(k, y, g)
    }
}

/// Encodes `x₀`, samples `z₀`, then for each step infers codes from the
/// neighbouring frames, moves the latent and tracks its log-density.
pub fn rollout<R: Rng>(model: &StaModel, frames: &[Frame], rng: &mut R) -> Result<Rollout> {
    let _g = no_grad();
    let first = frames
        .first()
        .ok_or_else(|| StaError::Config("rollout needs at least one frame".into()))?;
    let d = model.config.latent_dim;
    let (mu, logvar) = model.encode_rows(&model.frame_row(first)?)?;
    let eps: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let z0 = mu.add(&logvar.scale(0.5)?.exp()?.mask(eps.clone())?)?;
    let log_q0 = elbo::gaussian_log_q(&logvar, &eps, 1)?;
    let needs = Needs {
        laplacian: true,
        ..Needs::default()
    };
    let mut states = vec![z0];
    let mut log_density = vec![log_q0];
    let mut codes = Vec::with_capacity(frames.len().saturating_sub(1));
    for (i, pair) in frames.windows(2).enumerate() {
        let heads = model.code_heads(&pair_row(model, &pair[0], &pair[1])?)?;
        let s = sample_from_heads(model, &heads, rng)?;
        let (c_pot, c_rot) = s.coefficients()?;
        let z = &states[i];
        let fields = model.flows.evaluate_all(z, (i + 1) as f64, needs)?;
        let next = step_from_fields(z, &fields, &c_pot, &c_rot)?;
        let lq = log_density[i].sub(&crate::flows::weighted_laplacian(&fields, &c_pot)?)?;
        states.push(next);
        log_density.push(lq);
        let y = s.y()?;
        codes.push(CodeSample {
            g: s.g_tilde.mul(&y)?.to_vec(),
            y: y.to_vec(),
            spike_probs: heads.spike_probs()?.to_vec(),
            g_tilde: s.g_tilde.to_vec(),
            slab_loc: heads.slab_loc.to_vec(),
            slab_scale: heads.slab_scale.to_vec(),
            parts: s.y_rot.as_ref().map(|r| (s.y_pot.to_vec(), r.to_vec())),
        });
    }
    let reconstructions = model.decode_frames(&Tensor::concat(&states, 0)?)?;
    Ok(Rollout {
        trajectory: LatentTrajectory {
            times: (0..states.len()).collect(),
            states,
            log_density,
        },
        codes,
        reconstructions,
    })
}

/// Deterministic latent path from the posterior mean of `x₀` under a user
/// code schedule (`schedule[t]` has K entries), with decoded frames.
#[derive(Clone, Debug)]
pub struct Traversal {
    pub latents: Vec<Vec<f64>>,
    pub frames: Vec<Frame>,
}

pub fn traverse(model: &StaModel, x0: &Frame, schedule: &[Vec<f64>]) -> Result<Traversal> {
    let _g = no_grad();
    let k = model.config.fields;
    for (t, row) in schedule.iter().enumerate() {
        if row.len() != k {
            return Err(StaError::Config(format!("schedule row {t} has {} entries, expected {k}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StaError::OutOfRange(format!("schedule row {t} is not finite")));
        }
    }
    let (mu, _) = model.encode_rows(&model.frame_row(x0)?)?;
    let mut states = vec![mu];
    for (i, row) in schedule.iter().enumerate() {
        let g = Tensor::from_vec(row.clone(), &[1, k])?;
        let next = crate::flows::flow_step(&model.flows, &states[i], &g, (i + 1) as f64)?;
        states.push(next);
    }
    Ok(Traversal {
        latents: states.iter().map(Tensor::to_vec).collect(),
        frames: model.decode_frames(&Tensor::concat(&states, 0)?)?,
    })
}
