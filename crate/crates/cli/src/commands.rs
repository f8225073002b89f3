use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sta_core::eval::{evaluate, EvalSuite};
use sta_core::model::{self, load_checkpoint, rollout, traverse as traverse_model, Checkpoint, StaModel, TrainData, TrainOptions};
use sta_core::rng::{derive_seed, seeded};
use sta_core::transforms::{generate_dataset, load_batch, mosaic, read_ppm, save_batch, write_ppm, Frame, SequenceBatch};
use sta_core::StaError;

use crate::config::{content_hash, load_config, parse_config, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;
use crate::schedule::{load_matrix, parse_schedule, Schedule};
use crate::{EvalArgs, GenDataArgs, TraverseArgs, TrainArgs};

const MOSAIC_PAD: usize = 1;
const PREVIEW_SEQUENCES: usize = 4;
const EVAL_ROLLOUT_STREAM: u64 = 0x5EE5;

/// Worker cap from `STA_THREADS` (default: all cores). The numeric kernels
/// run on the calling thread, so this is recorded and bounds any pool.
pub fn threads() -> CliResult<usize> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("STA_THREADS") {
        Err(_) => Ok(cores),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n.min(cores)),
            _ => Err(CliError::config(format!("STA_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}

fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<RunConfig> {
    let cfg = match path {
        Some(p) => load_config(p)?,
        None => parse_config("{}")?,
    };
    Ok(cfg.with_seed(seed))
}

fn io_context(path: &Path) -> impl Fn(StaError) -> CliError + '_ {
    move |e| {
        let mut e = CliError::from(e);
        // a file that does not parse is an I/O problem, not a config one
        if e.code == crate::exit::CONFIG {
            e.code = crate::exit::IO;
        }
        e.context(path.display())
    }
}

fn load_data(path: &Path) -> CliResult<SequenceBatch> {
    load_batch(path).map_err(io_context(path))
}

fn load_model(path: &Path) -> CliResult<Checkpoint> {
    load_checkpoint(path).map_err(io_context(path))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// Runs `work` inside a manifest: the manifest exists before `work` starts
/// and records the outcome afterwards.
fn with_manifest(mut manifest: RunManifest, work: impl FnOnce(&Path) -> CliResult<()>) -> CliResult<()> {
    let outcome = work(&manifest.output_dir.clone());
    manifest.finish(&outcome)?;
    if outcome.is_ok() {
        println!("{}", manifest.output_dir.display());
    }
    outcome
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    let cfg = resolve_config(args.config.as_deref(), args.seed)?;
    let manifest = RunManifest::begin(
        &args.out,
        "gen-data",
        args.config.as_deref(),
        cfg.data.seed,
        &cfg.hash(),
        vec![],
        threads()?,
    )?;
    with_manifest(manifest, |dir| {
        write_json(&dir.join("config.json"), &cfg.to_json())?;
        let set = generate_dataset(&cfg.data)?;
        save_batch(&set, dir.join("dataset.stat"))?;
        let rows: Vec<Vec<Frame>> = (0..set.len().min(PREVIEW_SEQUENCES)).map(|n| set.sequence(n)).collect();
        write_ppm(&mosaic(&rows, MOSAIC_PAD)?, dir.join("preview.ppm"))?;
        Ok(())
    })
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let cfg = resolve_config(args.config.as_deref(), args.seed)?;
    let resume = args.resume.as_deref().map(load_model).transpose()?;
    if let Some(ck) = &resume {
        if ck.model.config != cfg.model {
            return Err(CliError::config(format!(
                "checkpoint config (hash {}) differs from the run config (hash {})",
                &model_hash(&ck.model)[..12],
                &content_hash(&serde_json::to_value(&cfg.model).unwrap_or_default())[..12]
            )));
        }
    }
    let frozen = args.data.as_deref().map(load_data).transpose()?;
    let mut inputs = vec![];
    if let Some(p) = &args.data {
        inputs.push(("data".to_string(), p.clone()));
    }
    if let Some(p) = &args.resume {
        inputs.push(("resume".to_string(), p.clone()));
    }
    let manifest = RunManifest::begin(
        &args.out,
        "train",
        args.config.as_deref(),
        cfg.model.seed,
        &cfg.hash(),
        inputs,
        threads()?,
    )?;
    with_manifest(manifest, |dir| {
        write_json(&dir.join("config.json"), &cfg.to_json())?;
        let (mut model, resume) = match resume {
            Some(ck) => (ck.model, Some((ck.adam, ck.iteration))),
            None => (StaModel::new(cfg.model.clone(), &mut seeded(cfg.model.seed))?, None),
        };
        let data = match &frozen {
            Some(set) => TrainData::Frozen(set),
            None => TrainData::Online(&cfg.data),
        };
        let opts = TrainOptions {
            out_dir: Some(dir.to_path_buf()),
            resume,
            stop_at: None,
        };
        let outcome = model::train(&mut model, data, &opts)?;
        if let Some(last) = outcome.checkpoints.last() {
            eprintln!("final checkpoint: {}", last.display());
        }
        Ok(())
    })
}

fn model_hash(model: &StaModel) -> String {
    content_hash(&serde_json::to_value(&model.config).unwrap_or_default())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let ck = load_model(&args.checkpoint)?;
    let held_out = load_data(&args.data)?;
    let seed = args.seed.unwrap_or(ck.model.config.seed);
    if args.suite_size == 0 {
        return Err(CliError::config("--suite-size must be at least 1"));
    }
    let manifest = RunManifest::begin(
        &args.out,
        "eval",
        None,
        seed,
        &model_hash(&ck.model),
        vec![
            ("checkpoint".into(), args.checkpoint.clone()),
            ("data".into(), args.data.clone()),
        ],
        threads()?,
    )?;
    with_manifest(manifest, |dir| {
        let model = &ck.model;
        let suite = EvalSuite::generate(&held_out.config, args.suite_size, seed)?;
        let report = evaluate(model, &suite, &held_out, seed)?;
        write_text(&dir.join("report.csv"), &report.to_csv())?;
        write_text(&dir.join("report.txt"), &report.to_text())?;
        write_json(&dir.join("report.json"), &serde_json::to_value(&report).unwrap_or_default())?;

        // ground truth above the model's rollout, per sequence
        let mut rows = Vec::new();
        for n in 0..held_out.len().min(PREVIEW_SEQUENCES) {
            let frames = held_out.sequence(n);
            let mut rng = seeded(derive_seed(seed, EVAL_ROLLOUT_STREAM, n as u64));
            let r = rollout(model, &frames, &mut rng)?;
            rows.push(frames);
            rows.push(r.reconstructions);
        }
        write_ppm(&mosaic(&rows, MOSAIC_PAD)?, dir.join("reconstructions.ppm"))?;
        print!("{}", report.to_text());
        Ok(())
    })
}

fn start_frame(args: &TraverseArgs) -> CliResult<Frame> {
    if let Some(p) = &args.image {
        return read_ppm(p).map_err(io_context(p));
    }
    let (Some(path), Some(idx)) = (&args.data, args.from_data) else {
        return Err(CliError::config("give --image or --data with --from-data"));
    };
    let set = load_data(path)?;
    if idx >= set.len() {
        return Err(CliError::config(format!("--from-data {idx} out of range, dataset has {} sequences", set.len())));
    }
    Ok(set.frame(idx, 0))
}

pub fn traverse(args: &TraverseArgs) -> CliResult<()> {
    let ck = load_model(&args.checkpoint)?;
    let model = &ck.model;
    let k = model.config.fields;
    let steps = args.steps.unwrap_or(model.config.steps);
    let mut schedules: Vec<Schedule> = args
        .schedule
        .iter()
        .map(|s| parse_schedule(s, k, steps))
        .collect::<CliResult<_>>()?;
    for p in &args.schedule_file {
        schedules.push(load_matrix(p, k)?);
    }
    if schedules.is_empty() {
        schedules.push(vec![vec![0.0; k]; steps]);
    }
    if schedules.iter().any(|s| s.len() != schedules[0].len()) {
        return Err(CliError::config("all schedules in one mosaic need the same number of steps"));
    }
    let x0 = start_frame(args)?;
    if (x0.channels, x0.height, x0.width) != (model.config.canvas.channels, model.config.canvas.height, model.config.canvas.width) {
        let c = model.config.canvas;
        return Err(CliError::incompatible(format!(
            "start frame is {}×{}×{}, model expects {}×{}×{}",
            x0.height, x0.width, x0.channels, c.height, c.width, c.channels
        )));
    }
    let mut inputs = vec![("checkpoint".to_string(), args.checkpoint.clone())];
    inputs.extend(args.image.iter().map(|p| ("image".to_string(), p.clone())));
    inputs.extend(args.data.iter().map(|p| ("data".to_string(), p.clone())));
    inputs.extend(args.schedule_file.iter().map(|p| ("schedule".to_string(), p.clone())));
    let manifest = RunManifest::begin(
        &args.out,
        "traverse",
        None,
        model.config.seed,
        &model_hash(model),
        inputs,
        threads()?,
    )?;
    with_manifest(manifest, |dir| {
        let mut rows = Vec::new();
        let mut csv = String::from("row,t");
        for i in 0..model.config.latent_dim {
            let _ = write!(csv, ",z{i}");
        }
        csv.push('\n');
        let mut log = String::new();
        for (r, schedule) in schedules.iter().enumerate() {
            let tr = traverse_model(model, &x0, schedule)?;
            for (t, z) in tr.latents.iter().enumerate() {
                let _ = write!(csv, "{r},{t}");
                for v in z {
                    let _ = write!(csv, ",{v:e}");
                }
                csv.push('\n');
            }
            if tr.latents.len() > 1 {
                let d: f64 = tr.latents[1]
                    .iter()
                    .zip(&tr.latents[0])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let _ = writeln!(log, "row {r}: first-step displacement {d:.12e}");
            }
            rows.push(tr.frames);
        }
        write_text(&dir.join("latents.csv"), &csv)?;
        write_text(&dir.join("traversal.log"), &log)?;
        write_ppm(&mosaic(&rows, MOSAIC_PAD)?, dir.join("traversal.ppm"))?;
        eprint!("{log}");
        Ok(())
    })
}
