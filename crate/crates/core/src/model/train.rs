use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::elbo::{elbo_graph, ElboBreakdown, ElboNoise, FrameBatch, Stage};
use super::{StaConfig, StaModel};
use crate::error::{Result, StaError};
use crate::nn::{Adam, AdamConfig};
use crate::rng::{child, derive_seed, seeded};
use crate::tensor::container::TensorFile;
use crate::tensor::{grad, Tensor};
use crate::transforms::{generate_dataset, DatasetConfig, SequenceBatch};

pub const CHECKPOINT_FORMAT: &str = "sta-checkpoint";
pub const METRICS_HEADER: &str =
    "iteration,stage,recon,kl_z0,kl_z_path,kl_spike_init,kl_spike_trans,kl_slab,loss_div,loss_hj,total,wall_time";

const TRAIN_STREAM: u64 = 0x7A11;
const ONLINE_STREAM: u64 = 0x0211;

/// Where training batches come from.
#[derive(Clone, Copy, Debug)]
pub enum TrainData<'a> {
    /// Sequences drawn uniformly with replacement from a fixed set.
    Frozen(&'a SequenceBatch),
    /// A fresh batch generated per iteration from this config (its `n` and
    /// `seed` are replaced by the batch size and a per-iteration seed).
    Online(&'a DatasetConfig),
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Receives `metrics.csv` and checkpoints. Nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Optimizer state and next iteration from a checkpoint.
    pub resume: Option<(Adam, usize)>,
    /// Stop (and checkpoint) before this iteration instead of at the end.
    pub stop_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: usize,
    pub stage: Stage,
    pub terms: ElboBreakdown,
    pub wall_time: f64,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let t = &self.terms;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.3}",
            self.iteration,
            self.stage.number(),
            t.recon,
            t.kl_z0,
            t.kl_z_path,
            t.kl_spike_init,
            t.kl_spike_trans,
            t.kl_slab,
            t.loss_div,
            t.loss_hj,
            t.total,
            self.wall_time
        )
    }
}

pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    /// Number of completed iterations.
    pub iteration: usize,
    pub adam: Adam,
    pub checkpoints: Vec<PathBuf>,
}

pub struct Checkpoint {
    pub model: StaModel,
    pub adam: Adam,
    pub iteration: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    iteration: usize,
    config: StaConfig,
}

pub fn save_checkpoint(model: &StaModel, adam: &Adam, iteration: usize, path: impl AsRef<Path>) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: 1,
        iteration,
        config: model.config.clone(),
    };
    let extra = adam.state_tensors(&model.parameter_names());
    model
        .to_file(serde_json::to_string_pretty(&header)?, extra)
        .save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let file = TensorFile::load(path)?;
    let header: CheckpointHeader = serde_json::from_str(&file.metadata)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(StaError::Format(format!("not a checkpoint: '{}'", header.format)));
    }
    // Architecture comes from the config; the init values are overwritten.
    let mut model = StaModel::new(header.config, &mut seeded(0))?;
    model.load_parameters(&file)?;
    let mut adam = Adam::new(adam_config(&model.config));
    adam.load_state(&model.parameter_names(), |n| file.get(n).map(|t| t.data.clone()))?;
    Ok(Checkpoint {
        model,
        adam,
        iteration: header.iteration,
    })
}

fn adam_config(cfg: &StaConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    }
}

fn next_batch<R: Rng>(cfg: &StaConfig, data: TrainData, iteration: usize, rng: &mut R) -> Result<FrameBatch> {
    match data {
        TrainData::Frozen(set) => {
            let idx: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..set.len())).collect();
            FrameBatch::from_sequences(set, &idx)
        }
        TrainData::Online(dc) => {
            let dc = DatasetConfig {
                n: cfg.batch_size,
                seed: derive_seed(cfg.seed, ONLINE_STREAM, iteration as u64),
                ..dc.clone()
            };
            let set = generate_dataset(&dc)?;
            FrameBatch::from_sequences(&set, &(0..set.len()).collect::<Vec<_>>())
        }
    }
}

fn check_data(cfg: &StaConfig, data: TrainData) -> Result<()> {
    let (canvas, steps, k, n) = match data {
        TrainData::Frozen(s) => (s.config.canvas, s.steps(), s.k(), s.len()),
        TrainData::Online(d) => {
            d.validate()?;
            (d.canvas, d.steps, d.transforms.len(), 1)
        }
    };
    if n == 0 {
        return Err(StaError::Config("training set is empty".into()));
    }
    if canvas != cfg.canvas || steps != cfg.steps {
        return Err(StaError::Incompatible(format!(
            "data has {}×{}×{} frames and T = {steps}; model expects {}×{}×{} and T = {}",
            canvas.height,
            canvas.width,
            canvas.channels,
            cfg.canvas.height,
            cfg.canvas.width,
            cfg.canvas.channels,
            cfg.steps
        )));
    }
    if k != cfg.fields {
        return Err(StaError::Incompatible(format!(
            "data has K = {k} transforms, model has K = {}",
            cfg.fields
        )));
    }
    Ok(())
}

fn dump_nonfinite(dir: &Path, model: &StaModel, iteration: usize, stage: Stage, terms: &ElboBreakdown) -> Result<PathBuf> {
    let norms: serde_json::Map<String, serde_json::Value> = model
        .parameters()
        .iter()
        .map(|p| {
            let n = p.tensor.data().iter().map(|v| v * v).sum::<f64>().sqrt();
            (p.name.clone(), serde_json::json!(n))
        })
        .collect();
    let dump = serde_json::json!({
        "iteration": iteration,
        "stage": stage.number(),
        "terms": terms,
        "parameter_norms": norms,
    });
    let path = dir.join(format!("nonfinite-{iteration}.json"));
    fs::write(&path, serde_json::to_string_pretty(&dump)?)?;
    Ok(path)
}

fn open_metrics(dir: &Path, append: bool) -> Result<BufWriter<File>> {
    let path = dir.join("metrics.csv");
    let fresh = !append || !path.exists();
    let file = if fresh {
        File::create(&path)?
    } else {
        OpenOptions::new().append(true).open(&path)?
    };
    let mut w = BufWriter::new(file);
    if fresh {
        writeln!(w, "{METRICS_HEADER}")?;
    }
    Ok(w)
}

/// Two-stage training. Iteration `i` draws its batch and noise from an RNG
/// derived from `(seed, i)` alone, so a resumed run reproduces the
/// uninterrupted one.
pub fn train(model: &mut StaModel, data: TrainData, opts: &TrainOptions) -> Result<TrainOutcome> {
    let cfg = model.config.clone();
    cfg.validate()?;
    check_data(&cfg, data)?;
    let total = cfg.total_iters();
    let end = opts.stop_at.map_or(total, |s| s.min(total));
    let (mut adam, start) = match &opts.resume {
        Some((a, i)) => (a.clone(), *i),
        None => (Adam::new(adam_config(&cfg)), 0),
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut metrics_out = match &opts.out_dir {
        Some(dir) => Some(open_metrics(dir, opts.resume.is_some())?),
        None => None,
    };
    let clock = Instant::now();
    let mut metrics = Vec::new();
    let mut checkpoints = Vec::new();
    let save = |model: &StaModel, adam: &Adam, iteration: usize, name: String, list: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = &opts.out_dir {
            let path = dir.join(name);
            save_checkpoint(model, adam, iteration, &path)?;
            list.push(path);
        }
        Ok(())
    };

    for i in start..end {
        let mut rng = child(cfg.seed, TRAIN_STREAM, i as u64);
        let stage = Stage::at(i, cfg.stage1_iters);
        let batch = next_batch(&cfg, data, i, &mut rng)?;
        let noise = ElboNoise::sample(model, batch.batch, batch.steps, &mut rng);
        let graph = elbo_graph(model, &batch, &noise, stage)?;
        if !graph.breakdown.is_finite() {
            let detail = match &opts.out_dir {
                Some(dir) => format!(
                    "diagnostics in {}",
                    dump_nonfinite(dir, model, i, stage, &graph.breakdown)?.display()
                ),
                None => format!("{:?}", graph.breakdown),
            };
            return Err(StaError::NonFinite { iteration: i, detail });
        }
        let inputs: Vec<Tensor> = model.parameters().iter().map(|p| p.tensor.clone()).collect();
        let grads = grad(&graph.loss, &inputs, false)?;
        drop(graph.loss);
        if let Some(bad) = grads.iter().position(|g| g.data().iter().any(|v| !v.is_finite())) {
            let name = model.parameters()[bad].name.clone();
            return Err(StaError::NonFinite {
                iteration: i,
                detail: format!("gradient of {name}"),
            });
        }
        adam.update(&mut model.parameters_mut(), &grads)?;

        if (i + 1) % cfg.log_every == 0 || i + 1 == end {
            let row = MetricsRow {
                iteration: i,
                stage,
                terms: graph.breakdown,
                wall_time: clock.elapsed().as_secs_f64(),
            };
            if let Some(w) = metrics_out.as_mut() {
                writeln!(w, "{}", row.csv_line())?;
                w.flush()?;
            }
            metrics.push(row);
        }
        if (i + 1) % cfg.checkpoint_every == 0 && i + 1 < end {
            save(model, &adam, i + 1, format!("checkpoint-{:06}.stat", i + 1), &mut checkpoints)?;
        }
    }
    let last = if end == total {
        "checkpoint-final.stat".to_string()
    } else {
        format!("checkpoint-{end:06}.stat")
    };
    save(model, &adam, end.max(start), last, &mut checkpoints)?;
    Ok(TrainOutcome {
        metrics,
        iteration: end.max(start),
        adam,
        checkpoints,
    })
}

/// SHA-256 of a metrics CSV with the wall-time column removed, so two runs
/// that differ only in timing hash equal.
pub fn metrics_digest(csv: &str) -> String {
    let mut h = Sha256::new();
    for line in csv.lines() {
        let kept = match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        };
        h.update(kept.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
