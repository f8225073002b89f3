//! Evaluation of a trained model: equivariance error per transform,
//! flow-to-transform matching, spike accuracy, slab error and the sequence
//! ELBO.
//!
//! An assignment maps flows to transforms: `assignment[f]` is the transform
//! explained by flow `f`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, StaError};
use crate::flows::{flow_step, flow_step_separate};
use crate::model::{elbo, ElboBreakdown, FrameBatch, Stage, StaModel};
use crate::rng::child;
use crate::tensor::{no_grad, Tensor};
use crate::transforms::{generate_with_spikes, DatasetConfig, SequenceBatch, SpikeSource};

/// Sequences per forward pass.
const CHUNK: usize = 64;
const SUITE_STREAM: u64 = 0xE7A1;

/// Flow-to-transform matching by exhaustive search is limited to this K.
pub const MAX_EXHAUSTIVE_K: usize = 8;

fn check_compatible(model: &StaModel, set: &SequenceBatch) -> Result<()> {
    let cfg = &model.config;
    if set.k() != cfg.fields {
        return Err(StaError::Incompatible(format!(
            "data has K = {} transforms, model has K = {}",
            set.k(),
            cfg.fields
        )));
    }
    if set.config.canvas != cfg.canvas {
        let (a, b) = (set.config.canvas, cfg.canvas);
        return Err(StaError::Incompatible(format!(
            "data frames are {}×{}×{}, model expects {}×{}×{}",
            a.height, a.width, a.channels, b.height, b.width, b.channels
        )));
    }
    Ok(())
}

pub fn check_assignment(assignment: &[usize], k: usize) -> Result<()> {
    let mut seen = vec![false; k];
    if assignment.len() != k {
        return Err(StaError::Config(format!("assignment has {} entries, expected {k}", assignment.len())));
    }
    for &a in assignment {
        if a >= k || seen[a] {
            return Err(StaError::Config(format!("assignment {assignment:?} is not a bijection on 0..{k}")));
        }
        seen[a] = true;
    }
    Ok(())
}

fn inverse(assignment: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; assignment.len()];
    for (f, &j) in assignment.iter().enumerate() {
        inv[j] = f;
    }
    inv
}

/// The parts of a flow field that act in a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parts {
    Both,
    Potential,
    Rotational,
}

impl Parts {
    /// Switches (potential, rotational).
    fn switches(self) -> (f64, f64) {
        match self {
            Parts::Both => (1.0, 1.0),
            Parts::Potential => (1.0, 0.0),
            Parts::Rotational => (0.0, 1.0),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parts::Both => "both",
            Parts::Potential => "potential",
            Parts::Rotational => "rotational",
        }
    }
}

/// Part patterns a flow is scored with. Under separate controls an active
/// spike can switch on either part alone or both, so a transform may be
/// carried by one part only; otherwise a flow always acts as a whole.
pub fn part_candidates(model: &StaModel) -> &'static [Parts] {
    if model.config.separate_controls {
        &[Parts::Both, Parts::Potential, Parts::Rotational]
    } else {
        &[Parts::Both]
    }
}

/// Mean over sequences of `Σ_{t=1..T} Σ |x_t − decode(z_t)|`, where `z_0` is
/// the posterior mean of `x_0` and `z_t = flow_step(z_{t−1}, code(n, t))`.
/// `code(n, t)` returns the K coefficients for sequence `n` at step `t` (1-based).
pub fn rollout_error<F>(model: &StaModel, set: &SequenceBatch, code: F) -> Result<f64>
where
    F: Fn(usize, usize) -> Vec<f64>,
{
    rollout_error_with(model, set, &vec![Parts::Both; model.config.fields], code)
}

/// [`rollout_error`] with flow `f` restricted to `parts[f]`.
pub fn rollout_error_with<F>(model: &StaModel, set: &SequenceBatch, parts: &[Parts], code: F) -> Result<f64>
where
    F: Fn(usize, usize) -> Vec<f64>,
{
    check_compatible(model, set)?;
    let _g = no_grad();
    let (k, p, steps) = (model.config.fields, set.pixels(), set.steps());
    if parts.len() != k {
        return Err(StaError::Config(format!("{} part patterns for {k} flows", parts.len())));
    }
    let whole = parts.iter().all(|&p| p == Parts::Both);
    let mut total = 0.0;
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(CHUNK) {
        let b = chunk.len();
        let x0: Vec<f64> = chunk.iter().flat_map(|&n| set.frame_values(n, 0).to_vec()).collect();
        let (mut z, _) = model.encode_rows(&Tensor::from_vec(x0, &[b, p])?)?;
        let mut states = Vec::with_capacity(steps);
        for t in 1..=steps {
            let g: Vec<f64> = chunk
                .iter()
                .flat_map(|&n| {
                    let row = code(n, t);
                    debug_assert_eq!(row.len(), k);
                    row
                })
                .collect();
            let g = Tensor::from_vec(g, &[b, k])?;
            z = if whole {
                flow_step(&model.flows, &z, &g, t as f64)?
            } else {
                let (y1, y2): (Vec<f64>, Vec<f64>) = (0..b).flat_map(|_| parts.iter().map(|p| p.switches())).unzip();
                let (y1, y2) = (Tensor::from_vec(y1, &[b, k])?, Tensor::from_vec(y2, &[b, k])?);
                flow_step_separate(&model.flows, &z, &g, &y1, &y2, t as f64)?
            };
            states.push(z.clone());
        }
        if steps == 0 {
            continue;
        }
        let x_hat = model.decode_rows(&Tensor::concat(&states, 0)?)?;
        let xh = x_hat.data();
        for t in 1..=steps {
            for (i, &n) in chunk.iter().enumerate() {
                let row = &xh[((t - 1) * b + i) * p..((t - 1) * b + i + 1) * p];
                total += set
                    .frame_values(n, t)
                    .iter()
                    .zip(row)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
            }
        }
    }
    Ok(total / set.len() as f64)
}

/// Ground-truth speed of transform `j` for sequence `n` at step `t`.
fn true_speed(set: &SequenceBatch, n: usize, t: usize, j: usize) -> f64 {
    set.codes[n].row_g(t - 1)[j]
}

/// Error of transform `j`'s sequences when rolled with flow `f` alone at the
/// true speeds, using the best of the flow's part patterns.
pub fn flow_error(model: &StaModel, set: &SequenceBatch, flow: usize, transform: usize) -> Result<f64> {
    Ok(best_flow_error(model, set, flow, transform)?.0)
}

/// [`flow_error`] and the part pattern that attains it (ties keep the
/// earlier candidate, so a whole flow wins ties).
pub fn best_flow_error(model: &StaModel, set: &SequenceBatch, flow: usize, transform: usize) -> Result<(f64, Parts)> {
    let k = model.config.fields;
    let mut best = (f64::INFINITY, Parts::Both);
    for &p in part_candidates(model) {
        let mut parts = vec![Parts::Both; k];
        parts[flow] = p;
        let e = rollout_error_with(model, set, &parts, |n, t| {
            let mut row = vec![0.0; k];
            row[flow] = true_speed(set, n, t, transform);
            row
        })?;
        if e < best.0 {
            best = (e, p);
        }
    }
    Ok(best)
}

/// `cost[f][j]`: error of flow `f` on the single-transform set of transform `j`.
pub fn cost_matrix(model: &StaModel, singles: &[SequenceBatch]) -> Result<Vec<Vec<f64>>> {
    Ok(cost_and_parts(model, singles)?.0)
}

/// The cost matrix and, per entry, the part pattern behind it.
pub fn cost_and_parts(model: &StaModel, singles: &[SequenceBatch]) -> Result<(Vec<Vec<f64>>, Vec<Vec<Parts>>)> {
    let k = model.config.fields;
    if singles.len() != k {
        return Err(StaError::Config(format!("{} probe sets for {k} transforms", singles.len())));
    }
    let mut cost = vec![vec![0.0; k]; k];
    let mut parts = vec![vec![Parts::Both; k]; k];
    for f in 0..k {
        for j in 0..k {
            (cost[f][j], parts[f][j]) = best_flow_error(model, &singles[j], f, j)?;
        }
    }
    Ok((cost, parts))
}

/// Equivariance error per transform under `assignment`, indexed by transform.
/// `singles[j]` holds sequences where only transform `j` acts.
pub fn equivariance_error(model: &StaModel, singles: &[SequenceBatch], assignment: &[usize]) -> Result<Vec<f64>> {
    let k = model.config.fields;
    check_assignment(assignment, k)?;
    if singles.len() != k {
        return Err(StaError::Config(format!("{} single-transform sets for {k} transforms", singles.len())));
    }
    let inv = inverse(assignment);
    (0..k).map(|j| flow_error(model, &singles[j], inv[j], j)).collect()
}

/// Same as [`equivariance_error`] but with speeds read from the code
/// network's slab location at the assigned flow.
pub fn equivariance_error_inferred(
    model: &StaModel,
    singles: &[SequenceBatch],
    assignment: &[usize],
    parts: &[Parts],
) -> Result<Vec<f64>> {
    let k = model.config.fields;
    check_assignment(assignment, k)?;
    let inv = inverse(assignment);
    (0..k)
        .map(|j| {
            let heads = infer_heads(model, &singles[j])?;
            let f = inv[j];
            let steps = singles[j].steps();
            rollout_error_with(model, &singles[j], parts, |n, t| {
                let mut row = vec![0.0; k];
                row[f] = heads.loc[(n * steps + t - 1) * k + f];
                row
            })
        })
        .collect()
}

/// All permutations of `0..k` in lexicographic order.
fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor exists");
        cur.swap(i - 1, j);
        cur[i..].reverse();
    }
}

/// Bijection `f → j` minimizing `Σ_f cost[f][j]`, by exhaustive search.
/// Ties go to the lexicographically first permutation.
pub fn best_assignment(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let k = cost.len();
    if k == 0 || cost.iter().any(|r| r.len() != k) {
        return Err(StaError::Config("cost matrix must be square and non-empty".into()));
    }
    if k > MAX_EXHAUSTIVE_K {
        return Err(StaError::Config(format!(
            "exhaustive matching supports K ≤ {MAX_EXHAUSTIVE_K}, got {k}; use the Hungarian variant"
        )));
    }
    let mut best = (f64::INFINITY, Vec::new());
    for p in permutations(k) {
        let c: f64 = p.iter().enumerate().map(|(f, &j)| cost[f][j]).sum();
        if c < best.0 {
            best = (c, p);
        }
    }
    if best.1.is_empty() {
        return Err(StaError::OutOfRange("cost matrix has no finite assignment".into()));
    }
    Ok(best.1)
}

/// Minimum-cost bijection by the O(K³) Hungarian method.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if n == 0 || cost.iter().any(|r| r.len() != n) {
        return Err(StaError::Config("cost matrix must be square and non-empty".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(StaError::OutOfRange("cost matrix must be finite".into()));
    }
    // Potentials u (rows), v (columns); way[j] = previous column on the
    // augmenting path; owner[j] = row matched to column j (1-based, 0 = none).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    Ok(assignment)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub assignment: Vec<usize>,
    pub cost: Vec<Vec<f64>>,
    /// Part pattern behind each cost entry.
    pub parts: Vec<Vec<Parts>>,
}

impl Matching {
    /// Per flow, the part pattern used for its matched transform.
    pub fn matched_parts(&self) -> Vec<Parts> {
        self.assignment.iter().enumerate().map(|(f, &j)| self.parts[f][j]).collect()
    }

    /// For each transform, matched error over the smallest error of any other
    /// flow on the same sequences. Below 1 means the matched flow wins.
    pub fn margins(&self) -> Vec<f64> {
        let k = self.assignment.len();
        let inv = inverse(&self.assignment);
        (0..k)
            .map(|j| {
                let matched = self.cost[inv[j]][j];
                let other = (0..k)
                    .filter(|&f| f != inv[j])
                    .map(|f| self.cost[f][j])
                    .fold(f64::INFINITY, f64::min);
                matched / other
            })
            .collect()
    }
}

/// Matches flows to transforms by minimum total equivariance error over all
/// bijections (K ≤ 8).
pub fn match_flows(model: &StaModel, singles: &[SequenceBatch]) -> Result<Matching> {
    let k = model.config.fields;
    if k > MAX_EXHAUSTIVE_K {
        return Err(StaError::Config(format!(
            "match_flows supports K ≤ {MAX_EXHAUSTIVE_K}, got {k}; use match_flows_hungarian"
        )));
    }
    let (cost, parts) = cost_and_parts(model, singles)?;
    Ok(Matching {
        assignment: best_assignment(&cost)?,
        cost,
        parts,
    })
}

pub fn match_flows_hungarian(model: &StaModel, singles: &[SequenceBatch]) -> Result<Matching> {
    let (cost, parts) = cost_and_parts(model, singles)?;
    Ok(Matching {
        assignment: hungarian(&cost)?,
        cost,
        parts,
    })
}

/// Code-network outputs for every transition of a set, laid out
/// `[(n·T + t) · K + k]`.
pub struct InferredCodes {
    pub probs: Vec<f64>,
    pub loc: Vec<f64>,
}

pub fn infer_heads(model: &StaModel, set: &SequenceBatch) -> Result<InferredCodes> {
    check_compatible(model, set)?;
    let _g = no_grad();
    let (k, p, steps) = (model.config.fields, set.pixels(), set.steps());
    let mut probs = vec![0.0; set.len() * steps * k];
    let mut loc = vec![0.0; set.len() * steps * k];
    let all: Vec<usize> = (0..set.len()).collect();
    for chunk in all.chunks(CHUNK) {
        let mut pairs = Vec::with_capacity(chunk.len() * steps * 2 * p);
        for &n in chunk {
            for t in 1..=steps {
                pairs.extend_from_slice(set.frame_values(n, t - 1));
                pairs.extend_from_slice(set.frame_values(n, t));
            }
        }
        if pairs.is_empty() {
            continue;
        }
        let heads = model.code_heads(&Tensor::from_vec(pairs, &[chunk.len() * steps, 2 * p])?)?;
        let off = chunk[0] * steps * k;
        let len = chunk.len() * steps * k;
        probs[off..off + len].copy_from_slice(heads.spike_probs()?.data());
        loc[off..off + len].copy_from_slice(heads.slab_loc.data());
    }
    Ok(InferredCodes { probs, loc })
}

/// Fraction of (step, transform) entries where the thresholded spike of the
/// assigned flow equals the truth. `predicted[(n·T + t)·K + f]` are flow
/// probabilities.
pub fn spike_accuracy_from(predicted: &[f64], set: &SequenceBatch, assignment: &[usize]) -> Result<f64> {
    let k = set.k();
    check_assignment(assignment, k)?;
    let inv = inverse(assignment);
    let steps = set.steps();
    if predicted.len() != set.len() * steps * k {
        return Err(StaError::Config("prediction count does not match the set".into()));
    }
    if steps == 0 {
        return Err(StaError::Config("no transitions to score".into()));
    }
    let mut hits = 0usize;
    for (n, code) in set.codes.iter().enumerate() {
        for t in 0..steps {
            for j in 0..k {
                let pred = predicted[(n * steps + t) * k + inv[j]] > 0.5;
                let truth = code.row_y(t)[j] > 0.5;
                hits += (pred == truth) as usize;
            }
        }
    }
    Ok(hits as f64 / (set.len() * steps * k) as f64)
}

pub fn spike_accuracy(model: &StaModel, set: &SequenceBatch, assignment: &[usize]) -> Result<f64> {
    spike_accuracy_from(&infer_heads(model, set)?.probs, set, assignment)
}

/// Mean `|ĝ − g̃|` over entries whose true spike is on.
pub fn slab_mae_from(predicted: &[f64], set: &SequenceBatch, assignment: &[usize]) -> Result<f64> {
    let k = set.k();
    check_assignment(assignment, k)?;
    let inv = inverse(assignment);
    let steps = set.steps();
    if predicted.len() != set.len() * steps * k {
        return Err(StaError::Config("prediction count does not match the set".into()));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (n, code) in set.codes.iter().enumerate() {
        for t in 0..steps {
            for j in 0..k {
                if code.row_y(t)[j] > 0.5 {
                    sum += (predicted[(n * steps + t) * k + inv[j]] - code.row_g_tilde(t)[j]).abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(StaError::Config("no active ground-truth spikes".into()));
    }
    Ok(sum / count as f64)
}

/// Slab error of the posterior location (the Laplace mean).
pub fn slab_mae(model: &StaModel, set: &SequenceBatch, assignment: &[usize]) -> Result<f64> {
    slab_mae_from(&infer_heads(model, set)?.loc, set, assignment)
}

/// Average per-sequence ELBO (stage-2 sampling, no physics penalties) and
/// the averaged terms. Sampling is seeded, so repeated calls agree.
pub fn sequence_elbo(model: &StaModel, set: &SequenceBatch, seed: u64) -> Result<(f64, ElboBreakdown)> {
    check_compatible(model, set)?;
    let mut acc = ElboBreakdown::default();
    let all: Vec<usize> = (0..set.len()).collect();
    for (ci, chunk) in all.chunks(CHUNK).enumerate() {
        let batch = FrameBatch::from_sequences(set, chunk)?;
        let b = elbo(model, &batch, &mut child(seed, SUITE_STREAM, ci as u64), Stage::Two)?;
        let w = chunk.len() as f64;
        acc.recon += w * b.recon;
        acc.kl_z0 += w * b.kl_z0;
        acc.kl_z_path += w * b.kl_z_path;
        acc.kl_spike_init += w * b.kl_spike_init;
        acc.kl_spike_trans += w * b.kl_spike_trans;
        acc.kl_slab += w * b.kl_slab;
        acc.loss_div += w * b.loss_div;
        acc.loss_hj += w * b.loss_hj;
        acc.total += w * b.total;
    }
    let n = set.len() as f64;
    for v in [
        &mut acc.recon,
        &mut acc.kl_z0,
        &mut acc.kl_z_path,
        &mut acc.kl_spike_init,
        &mut acc.kl_spike_trans,
        &mut acc.kl_slab,
        &mut acc.loss_div,
        &mut acc.loss_hj,
        &mut acc.total,
    ] {
        *v /= n;
    }
    Ok((acc.elbo(), acc))
}

/// Error of a two-transform set with both matched flows at their true
/// speeds, and with each flow alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositeResult {
    pub transforms: (usize, usize),
    pub flows: (usize, usize),
    pub both: f64,
    pub first_only: f64,
    pub second_only: f64,
}

pub fn composite_equivariance(
    model: &StaModel,
    pairs: &[((usize, usize), SequenceBatch)],
    assignment: &[usize],
    parts: &[Parts],
) -> Result<Vec<CompositeResult>> {
    let k = model.config.fields;
    check_assignment(assignment, k)?;
    let inv = inverse(assignment);
    pairs
        .iter()
        .map(|&((a, b), ref set)| {
            let (fa, fb) = (inv[a], inv[b]);
            let run = |use_a: bool, use_b: bool| {
                rollout_error_with(model, set, parts, |n, t| {
                    let mut row = vec![0.0; k];
                    if use_a {
                        row[fa] += true_speed(set, n, t, a);
                    }
                    if use_b {
                        row[fb] += true_speed(set, n, t, b);
                    }
                    row
                })
            };
            Ok(CompositeResult {
                transforms: (a, b),
                flows: (fa, fb),
                both: run(true, true)?,
                first_only: run(true, false)?,
                second_only: run(false, true)?,
            })
        })
        .collect()
}

/// Held-out sequences with fixed spike patterns, generated from a dataset
/// config: one set per transform with only that transform on, and one set
/// per unordered transform pair with both on.
#[derive(Clone, Debug)]
pub struct EvalSuite {
    pub singles: Vec<SequenceBatch>,
    pub pairs: Vec<((usize, usize), SequenceBatch)>,
}

impl EvalSuite {
    pub fn generate(base: &DatasetConfig, n: usize, seed: u64) -> Result<Self> {
        let k = base.transforms.len();
        let cfg = |i: u64| DatasetConfig {
            n,
            seed: crate::rng::derive_seed(seed, SUITE_STREAM, i),
            ..base.clone()
        };
        let row = |on: &[usize]| (0..k).map(|j| on.contains(&j)).collect::<Vec<bool>>();
        let singles = (0..k)
            .map(|j| generate_with_spikes(&cfg(j as u64), &SpikeSource::Constant(row(&[j]))))
            .collect::<Result<_>>()?;
        let mut pairs = Vec::new();
        for a in 0..k {
            for b in a + 1..k {
                let set = generate_with_spikes(&cfg((k + a * k + b) as u64), &SpikeSource::Constant(row(&[a, b])))?;
                pairs.push(((a, b), set));
            }
        }
        Ok(EvalSuite { singles, pairs })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub transform_names: Vec<String>,
    pub assignment: Vec<usize>,
    pub cost: Vec<Vec<f64>>,
    /// Part pattern behind each cost entry.
    pub parts: Vec<Vec<Parts>>,
    /// Per transform, with true speeds.
    pub equiv_error: Vec<f64>,
    /// Per transform, with inferred speeds.
    pub equiv_error_inferred: Vec<f64>,
    pub spike_accuracy: f64,
    pub slab_mae: Option<f64>,
    pub avg_elbo: f64,
    pub elbo_terms: ElboBreakdown,
    pub composite_equiv: Vec<CompositeResult>,
}

/// Full evaluation: matching and equivariance on the suite, code accuracy
/// and ELBO on `held_out` (a prior-sampled set with ground-truth codes).
pub fn evaluate(model: &StaModel, suite: &EvalSuite, held_out: &SequenceBatch, seed: u64) -> Result<EvalReport> {
    check_compatible(model, held_out)?;
    let matching = match_flows(model, &suite.singles)?;
    let a = &matching.assignment;
    let matched_parts = matching.matched_parts();
    let inv = inverse(a);
    let equiv_error = (0..a.len()).map(|j| matching.cost[inv[j]][j]).collect();
    let heads = infer_heads(model, held_out)?;
    let slab_mae = match slab_mae_from(&heads.loc, held_out, a) {
        Ok(v) => Some(v),
        Err(StaError::Config(_)) => None,
        Err(e) => return Err(e),
    };
    let (avg_elbo, elbo_terms) = sequence_elbo(model, held_out, seed)?;
    Ok(EvalReport {
        transform_names: held_out
            .config
            .transforms
            .iter()
            .map(|t| serde_json::to_value(t.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
            .collect(),
        equiv_error,
        equiv_error_inferred: equivariance_error_inferred(model, &suite.singles, a, &matched_parts)?,
        spike_accuracy: spike_accuracy_from(&heads.probs, held_out, a)?,
        slab_mae,
        avg_elbo,
        elbo_terms,
        composite_equiv: composite_equivariance(model, &suite.pairs, a, &matched_parts)?,
        assignment: matching.assignment,
        cost: matching.cost,
        parts: matching.parts,
    })
}

impl EvalReport {
    fn name(&self, j: usize) -> &str {
        &self.transform_names[j]
    }

    fn flow_of(&self, j: usize) -> usize {
        inverse(&self.assignment)[j]
    }

    pub fn matching(&self) -> Matching {
        Matching {
            assignment: self.assignment.clone(),
            cost: self.cost.clone(),
            parts: self.parts.clone(),
        }
    }

    /// `kind,subject,flow,value,alt_a,alt_b` rows: one per transform, one per
    /// composite pair, then the scalar metrics.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,subject,flow,value,alt_a,alt_b\n");
        for j in 0..self.assignment.len() {
            let _ = writeln!(
                s,
                "equivariance,{},{},{},{},",
                self.name(j),
                self.flow_of(j),
                self.equiv_error[j],
                self.equiv_error_inferred[j]
            );
        }
        for c in &self.composite_equiv {
            let _ = writeln!(
                s,
                "composite,{}+{},{}+{},{},{},{}",
                self.name(c.transforms.0),
                self.name(c.transforms.1),
                c.flows.0,
                c.flows.1,
                c.both,
                c.first_only,
                c.second_only
            );
        }
        let _ = writeln!(s, "spike_accuracy,,,{},,", self.spike_accuracy);
        match self.slab_mae {
            Some(v) => {
                let _ = writeln!(s, "slab_mae,,,{v},,");
            }
            None => s.push_str("slab_mae,,,,,\n"),
        }
        let _ = writeln!(s, "avg_elbo,,,{},,", self.avg_elbo);
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "assignment (flow -> transform):");
        for (f, &j) in self.assignment.iter().enumerate() {
            match self.parts[f][j] {
                Parts::Both => {
                    let _ = writeln!(s, "  flow {f} -> {}", self.name(j));
                }
                p => {
                    let _ = writeln!(s, "  flow {f} -> {} ({} part)", self.name(j), p.label());
                }
            }
        }
        let _ = writeln!(s, "\n{:<14} {:>5} {:>14} {:>14}", "transform", "flow", "equiv (true)", "equiv (infer)");
        for j in 0..self.assignment.len() {
            let _ = writeln!(
                s,
                "{:<14} {:>5} {:>14.3} {:>14.3}",
                self.name(j),
                self.flow_of(j),
                self.equiv_error[j],
                self.equiv_error_inferred[j]
            );
        }
        if !self.composite_equiv.is_empty() {
            let _ = writeln!(s, "\n{:<26} {:>12} {:>12} {:>12}", "composite", "both", "first only", "second only");
            for c in &self.composite_equiv {
                let label = format!("{}+{}", self.name(c.transforms.0), self.name(c.transforms.1));
                let _ = writeln!(s, "{label:<26} {:>12.3} {:>12.3} {:>12.3}", c.both, c.first_only, c.second_only);
            }
        }
        let _ = writeln!(s, "\nspike accuracy  {:.4}", self.spike_accuracy);
        match self.slab_mae {
            Some(v) => {
                let _ = writeln!(s, "slab MAE        {v:.4}");
            }
            None => {
                let _ = writeln!(s, "slab MAE        n/a (no active spikes)");
            }
        }
        let _ = writeln!(s, "average ELBO    {:.3}", self.avg_elbo);
        s
    }
}
