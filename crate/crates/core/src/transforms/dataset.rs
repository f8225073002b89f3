use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sprite::{render_sprite, SpriteConfig, SpriteShape};
use super::{apply_transform, Frame, TransformKind, TransformSpec};
use crate::error::{Result, StaError};
use crate::priors::{sample_slab, sample_spike_path, SlabConfig, SpikeChainConfig, SpikeSlabCode};
use crate::rng::child;
use crate::tensor::container::{NamedTensor, TensorFile};

const DATA_STREAM: u64 = 0xDA7A;
pub const DATASET_FORMAT: &str = "sta-dataset";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Canvas {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas {
            channels: 3,
            height: 32,
            width: 32,
        }
    }
}

impl Canvas {
    pub fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Ranges the initial sprite is drawn from (uniform in each).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpriteDistribution {
    pub size: (f64, f64),
    pub center_x: (f64, f64),
    pub center_y: (f64, f64),
    pub color: (f64, f64),
}

impl Default for SpriteDistribution {
    fn default() -> Self {
        SpriteDistribution {
            size: (3.5, 5.0),
            center_x: (10.0, 14.0),
            center_y: (12.0, 20.0),
            color: (0.3, 1.0),
        }
    }
}

impl SpriteDistribution {
    pub fn sample<R: Rng>(&self, rng: &mut R) -> SpriteConfig {
        let uni = |r: &mut R, (lo, hi): (f64, f64)| if hi > lo { r.random_range(lo..hi) } else { lo };
        let shape = if rng.random::<bool>() {
            SpriteShape::Disk
        } else {
            SpriteShape::Square
        };
        let size = uni(rng, self.size);
        let x = uni(rng, self.center_x);
        let y = uni(rng, self.center_y);
        let color = [uni(rng, self.color), uni(rng, self.color), uni(rng, self.color)];
        SpriteConfig {
            shape,
            size,
            position: (x, y),
            color,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub canvas: Canvas,
    pub sprites: SpriteDistribution,
    pub spike: SpikeChainConfig,
    pub slab: SlabConfig,
    pub transforms: Vec<TransformSpec>,
    pub n: usize,
    pub steps: usize,
    pub seed: u64,
}

impl DatasetConfig {
    /// 32×32 RGB sprites with the given transform set and the default priors.
    pub fn new(transforms: Vec<TransformSpec>, n: usize, steps: usize, seed: u64) -> Self {
        DatasetConfig {
            canvas: Canvas::default(),
            sprites: SpriteDistribution::default(),
            spike: SpikeChainConfig::new(transforms.len()),
            slab: SlabConfig::default(),
            transforms,
            n,
            steps,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.transforms.is_empty() || self.transforms.len() != self.spike.k {
            return Err(StaError::Config(format!(
                "{} transforms but spike chain has k = {}",
                self.transforms.len(),
                self.spike.k
            )));
        }
        if self.n == 0 {
            return Err(StaError::Config("dataset needs n >= 1".into()));
        }
        for t in &self.transforms {
            t.validate()?;
        }
        self.spike.validate()?;
        self.slab.validate()
    }
}

/// Default desk-scale transform magnitudes.
pub fn default_spec(kind: TransformKind) -> TransformSpec {
    let unit = match kind {
        TransformKind::Scale => 1.06,
        TransformKind::Rotate => 12.0,
        TransformKind::HueShift => 0.35,
        TransformKind::TranslateX | TransformKind::TranslateY => 1.4,
    };
    TransformSpec::new(kind, unit)
}

/// How spike rows are produced during generation.
#[derive(Clone, Debug, PartialEq)]
pub enum SpikeSource {
    /// Markov chain prior from the config.
    Prior,
    /// The same row at every step.
    Constant(Vec<bool>),
}

/// `n` sequences of `steps + 1` frames with their ground-truth codes.
/// Frames are stored flat, sequence-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub config: DatasetConfig,
    pub frames: Vec<f64>,
    pub codes: Vec<SpikeSlabCode>,
}

#[derive(Serialize, Deserialize)]
struct BatchHeader {
    format: String,
    config: DatasetConfig,
}

impl SequenceBatch {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.config.steps
    }

    pub fn k(&self) -> usize {
        self.config.transforms.len()
    }

    pub fn pixels(&self) -> usize {
        self.config.canvas.pixels()
    }

    pub fn frame_values(&self, n: usize, t: usize) -> &[f64] {
        let p = self.pixels();
        let base = (n * (self.steps() + 1) + t) * p;
        &self.frames[base..base + p]
    }

    pub fn frame(&self, n: usize, t: usize) -> Frame {
        let c = self.config.canvas;
        Frame {
            channels: c.channels,
            height: c.height,
            width: c.width,
            values: self.frame_values(n, t).to_vec(),
        }
    }

    pub fn sequence(&self, n: usize) -> Vec<Frame> {
        (0..=self.steps()).map(|t| self.frame(n, t)).collect()
    }

    /// Sequences `indices` as a new batch.
    pub fn subset(&self, indices: &[usize]) -> SequenceBatch {
        let mut frames = Vec::with_capacity(indices.len() * (self.steps() + 1) * self.pixels());
        for &i in indices {
            for t in 0..=self.steps() {
                frames.extend_from_slice(self.frame_values(i, t));
            }
        }
        let mut config = self.config.clone();
        config.n = indices.len();
        SequenceBatch {
            config,
            frames,
            codes: indices.iter().map(|&i| self.codes[i].clone()).collect(),
        }
    }

    fn to_file(&self) -> Result<TensorFile> {
        let header = BatchHeader {
            format: DATASET_FORMAT.into(),
            config: self.config.clone(),
        };
        let c = self.config.canvas;
        let (n, steps, k) = (self.len(), self.steps(), self.k());
        let spikes = self.codes.iter().flat_map(|c| c.y.iter().copied()).collect();
        let slabs = self.codes.iter().flat_map(|c| c.g_tilde.iter().copied()).collect();
        Ok(TensorFile {
            metadata: serde_json::to_string_pretty(&header)?,
            tensors: vec![
                NamedTensor::new(
                    "frames",
                    vec![n, steps + 1, c.height, c.width, c.channels],
                    self.frames.clone(),
                ),
                NamedTensor::new("spikes", vec![n, steps, k], spikes),
                NamedTensor::new("slabs", vec![n, steps, k], slabs),
            ],
        })
    }

    fn from_file(mut file: TensorFile) -> Result<SequenceBatch> {
        let header: BatchHeader = serde_json::from_str(&file.metadata)?;
        if header.format != DATASET_FORMAT {
            return Err(StaError::Format(format!("not a dataset file: '{}'", header.format)));
        }
        let config = header.config;
        let c = config.canvas;
        let (n, steps, k) = (config.n, config.steps, config.transforms.len());
        let mut take = |name: &str, shape: Vec<usize>| -> Result<Vec<f64>> {
            let idx = file
                .tensors
                .iter()
                .position(|t| t.name == name)
                .ok_or_else(|| StaError::Format(format!("missing tensor '{name}'")))?;
            let t = file.tensors.swap_remove(idx);
            if t.shape != shape {
                return Err(StaError::Format(format!(
                    "tensor '{name}' has shape {:?}, header implies {shape:?}",
                    t.shape
                )));
            }
            Ok(t.data)
        };
        let frames = take("frames", vec![n, steps + 1, c.height, c.width, c.channels])?;
        let spikes = take("spikes", vec![n, steps, k])?;
        let slabs = take("slabs", vec![n, steps, k])?;
        let per = steps * k;
        let codes = (0..n)
            .map(|i| {
                SpikeSlabCode::new(
                    k,
                    spikes[i * per..(i + 1) * per].to_vec(),
                    slabs[i * per..(i + 1) * per].to_vec(),
                )
            })
            .collect::<Result<_>>()?;
        Ok(SequenceBatch {
            config,
            frames,
            codes,
        })
    }
}

fn generate_one(cfg: &DatasetConfig, source: &SpikeSource, index: usize) -> Result<(Vec<f64>, SpikeSlabCode)> {
    let mut rng = child(cfg.seed, DATA_STREAM, index as u64);
    let k = cfg.transforms.len();
    let sprite = cfg.sprites.sample(&mut rng);
    let path = match source {
        SpikeSource::Prior => sample_spike_path(&cfg.spike, cfg.steps, &mut rng)?,
        SpikeSource::Constant(row) => vec![row.clone(); cfg.steps],
    };
    let slab = sample_slab(&cfg.slab, cfg.steps, k, &mut rng);
    let code = SpikeSlabCode::from_path(&path, slab)?;
    let mut frame = render_sprite(&sprite, cfg.canvas)?;
    let mut values = Vec::with_capacity((cfg.steps + 1) * cfg.canvas.pixels());
    values.extend_from_slice(&frame.values);
    for t in 0..cfg.steps {
        for (kk, spec) in cfg.transforms.iter().enumerate() {
            let g = code.row_g(t)[kk];
            if g != 0.0 {
                frame = apply_transform(&frame, spec, g)?;
            }
        }
        values.extend_from_slice(&frame.values);
    }
    Ok((values, code))
}

/// Samples a dataset from the spike-and-slab prior. Sequence `i` uses its own
/// RNG stream derived from `cfg.seed`, so the output depends only on `cfg`.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<SequenceBatch> {
    generate_with_spikes(cfg, &SpikeSource::Prior)
}

pub fn generate_with_spikes(cfg: &DatasetConfig, source: &SpikeSource) -> Result<SequenceBatch> {
    if let SpikeSource::Constant(row) = source {
        if row.len() != cfg.transforms.len() {
            return Err(StaError::Config(format!(
                "constant spike row has length {}, expected {}",
                row.len(),
                cfg.transforms.len()
            )));
        }
    }
    cfg.validate()?;
    let mut frames = Vec::with_capacity(cfg.n * (cfg.steps + 1) * cfg.canvas.pixels());
    let mut codes = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let (values, code) = if cfg.steps == 0 {
            let mut rng = child(cfg.seed, DATA_STREAM, i as u64);
            let sprite = cfg.sprites.sample(&mut rng);
            let f = render_sprite(&sprite, cfg.canvas)?;
            (f.values, empty_code(cfg.transforms.len()))
        } else {
            generate_one(cfg, source, i)?
        };
        frames.extend(values);
        codes.push(code);
    }
    Ok(SequenceBatch {
        config: cfg.clone(),
        frames,
        codes,
    })
}

fn empty_code(k: usize) -> SpikeSlabCode {
    SpikeSlabCode {
        steps: 0,
        k,
        y: vec![],
        g_tilde: vec![],
        g: vec![],
    }
}

pub fn save_batch(batch: &SequenceBatch, path: impl AsRef<Path>) -> Result<()> {
    batch.to_file()?.save(path)
}

pub fn load_batch(path: impl AsRef<Path>) -> Result<SequenceBatch> {
    SequenceBatch::from_file(TensorFile::load(path)?)
}
