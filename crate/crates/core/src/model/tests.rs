use super::*;
use crate::flows::{flow_step, Potential};
use crate::rng::seeded;
use crate::tensor::{grad, no_grad};
use crate::transforms::{
    default_spec, generate_dataset, DatasetConfig, SequenceBatch, SpriteDistribution, TransformKind,
};

fn tiny_config() -> StaConfig {
    StaConfig {
        canvas: Canvas {
            channels: 3,
            height: 8,
            width: 8,
        },
        hidden: 10,
        flow_hidden: 8,
        embed_dim: 4,
        batch_size: 2,
        stage1_iters: 3,
        stage2_iters: 3,
        checkpoint_every: 2,
        ..StaConfig::new(3, 2, 3)
    }
}

fn tiny_data(n: usize, seed: u64) -> SequenceBatch {
    let mut dc = DatasetConfig::new(
        vec![default_spec(TransformKind::TranslateX), default_spec(TransformKind::Scale)],
        n,
        3,
        seed,
    );
    dc.canvas = tiny_config().canvas;
    dc.sprites = SpriteDistribution {
        size: (1.5, 2.5),
        center_x: (3.0, 5.0),
        center_y: (3.0, 5.0),
        color: (0.3, 1.0),
    };
    generate_dataset(&dc).unwrap()
}

fn random_batch(cfg: &StaConfig, b: usize, seed: u64) -> FrameBatch {
    let mut rng = seeded(seed);
    let c = cfg.canvas;
    let seqs: Vec<Vec<Frame>> = (0..b)
        .map(|_| {
            (0..=cfg.steps)
                .map(|_| {
                    let v = (0..c.pixels()).map(|_| rng.random::<f64>()).collect();
                    Frame::from_values(c.channels, c.height, c.width, v).unwrap()
                })
                .collect()
        })
        .collect();
    FrameBatch::from_frames(&seqs).unwrap()
}

fn zero_mlp(m: &mut Mlp) {
    for p in m.parameters_mut() {
        let n = p.tensor.numel();
        p.set_data(vec![0.0; n]).unwrap();
    }
}

/// Sets the last layer of `m` to zero weights and the given bias.
fn constant_head(m: &mut Mlp, bias: Vec<f64>) {
    let last = m.layers.last_mut().unwrap();
    let n = last.weight.tensor.numel();
    last.weight.set_data(vec![0.0; n]).unwrap();
    last.bias.set_data(bias).unwrap();
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sta-model-{tag}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

use std::path::PathBuf;

#[test]
fn or_gate_truth_table() {
    let y1 = Tensor::from_vec(vec![0.0, 1.0, 0.0, 1.0, 0.5], &[5]).unwrap();
    let y2 = Tensor::from_vec(vec![0.0, 0.0, 1.0, 1.0, 0.5], &[5]).unwrap();
    assert_eq!(or_gate(&y1, &y2).unwrap().to_vec(), vec![0.0, 1.0, 1.0, 1.0, 0.75]);
}

#[test]
fn config_validation() {
    assert!(StaConfig::default().validate().is_ok());
    let bad = StaConfig {
        tau: 0.0,
        ..StaConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = StaConfig {
        fields: 3,
        ..StaConfig::default()
    };
    assert!(bad.validate().is_err());
    let json = serde_json::to_string(&StaConfig::default()).unwrap();
    let back: StaConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, StaConfig::default());
    let partial: StaConfig = serde_json::from_str(r#"{"latent_dim": 4}"#).unwrap();
    assert_eq!(partial.latent_dim, 4);
    assert_eq!(partial.lr, 1e-4);
}

#[test]
fn encode_is_deterministic_and_checks_shape() {
    let model = StaModel::new(tiny_config(), &mut seeded(1)).unwrap();
    let data = tiny_data(1, 3);
    let a = encode(&model, &data.frame(0, 0)).unwrap();
    let b = encode(&model, &data.frame(0, 0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0.len(), 3);
    let wrong = Frame::black(3, 4, 4);
    assert!(matches!(encode(&model, &wrong), Err(StaError::Incompatible(_))));
}

#[test]
fn standard_normal_posterior_has_zero_kl() {
    let mut cfg = tiny_config();
    cfg.steps = 0;
    let mut model = StaModel::new(cfg.clone(), &mut seeded(2)).unwrap();
    constant_head(&mut model.encoder, vec![0.0; 6]);
    let batch = random_batch(&cfg, 3, 1);
    let b = elbo(&model, &batch, &mut seeded(0), Stage::Two).unwrap();
    assert_eq!(b.kl_z0, 0.0);
}

#[test]
fn reparameterized_sample_gradient_in_mu() {
    let eps = vec![0.3, -1.2, 0.7];
    let logvar = Tensor::from_vec(vec![0.1, -0.4, 0.2], &[1, 3]).unwrap();
    let mu = Tensor::from_vec(vec![0.5, -0.2, 1.0], &[1, 3]).unwrap();
    let f = |m: &Tensor| -> Result<Tensor> {
        let z = m.add(&logvar.scale(0.5)?.exp()?.mask(eps.clone())?)?;
        z.square()?.sin()?.sum()
    };
    let r = crate::tensor::finite_diff_check(f, &mu, 1e-6, 1e-6).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn infer_codes_saturates_and_freezes() {
    let cfg = tiny_config();
    let mut model = StaModel::new(cfg.clone(), &mut seeded(4)).unwrap();
    constant_head(&mut model.code_net, vec![1e4, 1e4, 0.3, -0.2, 0.0, 0.0]);
    let data = tiny_data(1, 5);
    let s = infer_codes(&model, &data.frame(0, 0), &data.frame(0, 1), &mut seeded(0)).unwrap();
    assert_eq!(s.y, vec![1.0, 1.0]);
    assert_eq!(s.spike_probs, vec![1.0, 1.0]);
    assert_eq!(s.slab_loc, vec![1.3, 0.8]);

    let heads = CodeHeads {
        spike_logits: Tensor::zeros(&[1, 2]),
        spike_logits_rot: None,
        slab_loc: Tensor::from_vec(vec![0.7, 1.4], &[1, 2]).unwrap(),
        slab_scale: Tensor::zeros(&[1, 2]),
    };
    let s = sample_from_heads(&model, &heads, &mut seeded(1)).unwrap();
    assert_eq!(s.g_tilde.to_vec(), vec![0.7, 1.4]);
}

#[test]
fn slab_samples_follow_the_laplace_posterior() {
    let w = laplace_offsets(40_000, &mut seeded(9));
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let mad = w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64;
    // standard Laplace: mean 0 (sd √2), mean |X| = 1 (sd 1)
    let n = (w.len() as f64).sqrt();
    assert!(mean.abs() < 3.0 * 2f64.sqrt() / n, "{mean}");
    assert!((mad - 1.0).abs() < 3.0 / n, "{mad}");
}

#[test]
fn zero_length_rollout_is_a_plain_autoencoder_pass() {
    let model = StaModel::new(tiny_config(), &mut seeded(6)).unwrap();
    let data = tiny_data(1, 1);
    let r = rollout(&model, &data.sequence(0)[..1], &mut seeded(2)).unwrap();
    assert_eq!(r.trajectory.steps(), 0);
    assert!(r.codes.is_empty());
    let z0 = &r.trajectory.states[0];
    assert_eq!(r.reconstructions, model.decode_frames(z0).unwrap());
}

#[test]
fn frozen_identity_flows_reconstruct_z0_everywhere() {
    let mut model = StaModel::new(tiny_config(), &mut seeded(7)).unwrap();
    for p in model.flows.parameters_mut() {
        if p.name != "flow.log_diffusion" {
            let n = p.tensor.numel();
            p.set_data(vec![0.0; n]).unwrap();
        }
    }
    let data = tiny_data(1, 2);
    let r = rollout(&model, &data.sequence(0), &mut seeded(3)).unwrap();
    assert_eq!(r.reconstructions.len(), 4);
    for f in &r.reconstructions[1..] {
        assert_eq!(f, &r.reconstructions[0]);
    }
}

#[test]
fn rollout_states_recompute_bit_exactly() {
    let model = StaModel::new(tiny_config(), &mut seeded(8)).unwrap();
    let data = tiny_data(1, 4);
    let r = rollout(&model, &data.sequence(0), &mut seeded(5)).unwrap();
    let _g = no_grad();
    for t in 1..=3 {
        let g = Tensor::from_vec(r.codes[t - 1].g.clone(), &[1, 2]).unwrap();
        let z = flow_step(&model.flows, &r.trajectory.states[t - 1], &g, t as f64).unwrap();
        assert_eq!(z.to_vec(), r.trajectory.states[t].to_vec());
    }
    let code = r.code(2).unwrap();
    assert!(code.is_consistent());
}

#[test]
fn optimum_terms() {
    // Decoder outputs 0.5 on gray frames, encoder outputs N(0, I), one step
    // with q = p1, slab posterior = prior, zero flows and zero diffusion.
    let mut cfg = tiny_config();
    cfg.steps = 1;
    let mut model = StaModel::new(cfg.clone(), &mut seeded(10)).unwrap();
    constant_head(&mut model.encoder, vec![0.0; 6]);
    zero_mlp(&mut model.decoder);
    let logit = (cfg.spike.p1 / (1.0 - cfg.spike.p1)).ln();
    constant_head(&mut model.code_net, vec![logit, logit, 0.0, 0.0, 0.0, 0.0]);
    for p in model.flows.parameters_mut() {
        let n = p.tensor.numel();
        let v = if p.name == "flow.log_diffusion" { -1e4 } else { 0.0 };
        p.set_data(vec![v; n]).unwrap();
    }
    let c = cfg.canvas;
    let gray = Frame::from_values(c.channels, c.height, c.width, vec![0.5; c.pixels()]).unwrap();
    let batch = FrameBatch::from_frames(&[vec![gray.clone(), gray.clone()], vec![gray.clone(), gray]]).unwrap();
    let b = elbo(&model, &batch, &mut seeded(1), Stage::Two).unwrap();
    assert_eq!(b.kl_z0, 0.0);
    assert!(b.kl_spike_init.abs() < 1e-12, "{b:?}");
    assert!(b.kl_slab.abs() < 1e-12, "{b:?}");
    assert!(b.kl_z_path.abs() < 1e-12, "{b:?}");
    let best = -0.5 * 2.0 * c.pixels() as f64 * (2.0 * std::f64::consts::PI).ln();
    assert!((b.recon - best).abs() < 1e-9);
    assert_eq!(b.loss_div, 0.0);
    assert_eq!(b.loss_hj, 0.0);
}

#[test]
fn pinn_weights_enter_linearly() {
    let cfg = tiny_config();
    let model = StaModel::new(cfg.clone(), &mut seeded(11)).unwrap();
    let batch = random_batch(&cfg, 2, 3);
    let noise = ElboNoise::sample(&model, 2, 3, &mut seeded(4));
    let _g = no_grad();
    let a = elbo_graph(&model, &batch, &noise, Stage::Two).unwrap().breakdown;
    let mut doubled = model.clone();
    doubled.config.w_div *= 2.0;
    let b = elbo_graph(&doubled, &batch, &noise, Stage::Two).unwrap().breakdown;
    assert!(a.loss_div > 0.0);
    assert_eq!(a.loss_div, b.loss_div);
    assert_eq!(a.recon, b.recon);
    assert_eq!(a.kl_z_path, b.kl_z_path);
    let extra = b.total - a.total;
    assert!((extra - cfg.w_div * a.loss_div).abs() < 1e-9 * a.total.abs().max(1.0));
}

#[test]
fn total_is_the_weighted_sum() {
    let mut cfg = tiny_config();
    cfg.beta.kl_z_path = 0.3;
    cfg.beta.kl_slab = 2.0;
    let model = StaModel::new(cfg.clone(), &mut seeded(12)).unwrap();
    let batch = random_batch(&cfg, 2, 5);
    let b = elbo(&model, &batch, &mut seeded(6), Stage::Two).unwrap();
    let w = &cfg.beta;
    let expect = -w.recon * b.recon
        + w.kl_z0 * b.kl_z0
        + w.kl_z_path * b.kl_z_path
        + w.kl_spike_init * b.kl_spike_init
        + w.kl_spike_trans * b.kl_spike_trans
        + w.kl_slab * b.kl_slab
        + cfg.w_div * b.loss_div
        + cfg.w_hj * b.loss_hj;
    assert!((b.total - expect).abs() < 1e-9 * expect.abs());
    assert!(b.recon <= 0.0);
}

#[test]
fn stage_one_has_no_slab_term() {
    let cfg = tiny_config();
    let model = StaModel::new(cfg.clone(), &mut seeded(13)).unwrap();
    let batch = random_batch(&cfg, 2, 7);
    let b = elbo(&model, &batch, &mut seeded(8), Stage::One).unwrap();
    assert_eq!(b.kl_slab, 0.0);
    let b2 = elbo(&model, &batch, &mut seeded(8), Stage::Two).unwrap();
    assert!(b2.kl_slab > 0.0);
}

#[test]
fn full_model_gradients_pass_finite_differences() {
    let cfg = tiny_config();
    let mut model = StaModel::new(cfg.clone(), &mut seeded(14)).unwrap();
    let batch = random_batch(&cfg, 2, 9);
    let noise = ElboNoise::sample(&model, 2, 3, &mut seeded(10));
    let loss = |m: &StaModel| elbo_graph(m, &batch, &noise, Stage::Two).unwrap().loss;
    let inputs: Vec<Tensor> = model.parameters().iter().map(|p| p.tensor.clone()).collect();
    let grads = grad(&loss(&model), &inputs, false).unwrap();

    let mut rng = seeded(15);
    let h = 1e-6;
    for _ in 0..20 {
        let pi = rng.random_range(0..inputs.len());
        let ei = rng.random_range(0..inputs[pi].numel());
        let analytic = grads[pi].data()[ei];
        let base = model.parameters()[pi].tensor.to_vec();
        let eval = |m: &mut StaModel, delta: f64| {
            let mut v = base.clone();
            v[ei] += delta;
            m.parameters_mut()[pi].set_data(v).unwrap();
            let _g = no_grad();
            loss(m).item()
        };
        let numeric = (eval(&mut model, h) - eval(&mut model, -h)) / (2.0 * h);
        model.parameters_mut()[pi].set_data(base).unwrap();
        let name = &model.parameters()[pi].name;
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
        assert!(err < 1e-3, "{name}[{ei}]: analytic {analytic}, numeric {numeric}");
    }
}

fn with_separate_controls(model: &StaModel) -> StaModel {
    let mut cfg = model.config.clone();
    cfg.separate_controls = true;
    let k = cfg.fields;
    let mut out = model.clone();
    out.config = cfg;
    let last = out.code_net.layers.last_mut().unwrap();
    let (h, w) = last.weight.tensor.dims2().unwrap();
    let old_w = last.weight.tensor.to_vec();
    let old_b = last.bias.tensor.to_vec();
    let mut nw = Vec::with_capacity(h * (w + k));
    for r in 0..h {
        nw.extend_from_slice(&old_w[r * w..(r + 1) * w]);
        nw.extend_from_slice(&old_w[r * w..r * w + k]);
    }
    let mut nb = old_b.clone();
    nb.extend_from_slice(&old_b[..k]);
    last.weight = Parameter::new(last.weight.name.clone(), nw, &[h, w + k]).unwrap();
    last.bias = Parameter::new(last.bias.name.clone(), nb, &[w + k]).unwrap();
    out
}

#[test]
fn separate_controls_with_equal_switches_match_standard_path() {
    let cfg = tiny_config();
    let model = StaModel::new(cfg.clone(), &mut seeded(16)).unwrap();
    let sep = with_separate_controls(&model);
    let batch = random_batch(&cfg, 2, 11);
    let noise = ElboNoise::sample(&model, 2, 3, &mut seeded(12));
    let mut noise_sep = noise.clone();
    noise_sep.spikes_rot = Some(noise.spikes.clone());
    let _g = no_grad();
    for stage in [Stage::One, Stage::Two] {
        let a = elbo_graph(&model, &batch, &noise, stage).unwrap();
        let b = elbo_graph(&sep, &batch, &noise_sep, stage).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert_eq!(x.to_vec(), y.to_vec());
        }
        assert_eq!(a.breakdown.recon, b.breakdown.recon);
    }
}

#[test]
fn traverse_examples() {
    let mut model = StaModel::new(tiny_config(), &mut seeded(17)).unwrap();
    let data = tiny_data(1, 6);
    let x0 = data.frame(0, 0);
    let still = traverse(&model, &x0, &vec![vec![0.0, 0.0]; 3]).unwrap();
    assert_eq!(still.frames.len(), 4);
    assert!(still.frames.iter().all(|f| f == &still.frames[0]));
    assert!(traverse(&model, &x0, &[vec![0.0]]).is_err());

    let disp = |m: &StaModel, g: f64| -> Vec<f64> {
        let tr = traverse(m, &x0, &[vec![g, 0.0]]).unwrap();
        tr.latents[1].iter().zip(&tr.latents[0]).map(|(a, b)| a - b).collect()
    };
    let one = disp(&model, 0.5);
    let two = disp(&model, 1.0);
    for (a, b) in one.iter().zip(&two) {
        assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    // Remove time dependence so forward-then-back is a pure smoothness test.
    if let Potential::Mlp(m) = &mut model.flows.potentials[0] {
        let d = model.config.latent_dim;
        let w = &mut m.layers[0].weight;
        let (rows, cols) = w.tensor.dims2().unwrap();
        let mut v = w.tensor.to_vec();
        for r in d..rows {
            v[r * cols..(r + 1) * cols].fill(0.0);
        }
        w.set_data(v).unwrap();
    }
    let g = 0.05;
    let tr = traverse(&model, &x0, &[vec![g, 0.0], vec![-g, 0.0]]).unwrap();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let out = dist(&tr.latents[1], &tr.latents[0]);
    let back = dist(&tr.latents[2], &tr.latents[0]);
    assert!(out > 0.0 && back < 0.1 * out, "out {out}, back {back}");
}

proptest::proptest! {
    #[test]
    fn first_step_is_linear_in_the_code(alpha in -3.0f64..3.0, g0 in -2.0f64..2.0, g1 in -2.0f64..2.0) {
        let model = StaModel::new(tiny_config(), &mut seeded(18)).unwrap();
        let data = tiny_data(1, 7);
        let x0 = data.frame(0, 0);
        let base = traverse(&model, &x0, &[vec![g0, g1]]).unwrap();
        let scaled = traverse(&model, &x0, &[vec![alpha * g0, alpha * g1]]).unwrap();
        for i in 0..3 {
            let d1 = base.latents[1][i] - base.latents[0][i];
            let d2 = scaled.latents[1][i] - scaled.latents[0][i];
            proptest::prop_assert!((d2 - alpha * d1).abs() < 1e-12 * (1.0 + d1.abs() * 4.0));
        }
    }
}

#[test]
fn zero_iterations_checkpoint_equals_initialization() {
    let mut cfg = tiny_config();
    cfg.stage1_iters = 0;
    cfg.stage2_iters = 0;
    let mut model = StaModel::new(cfg, &mut seeded(19)).unwrap();
    let init = model.clone();
    let data = tiny_data(4, 8);
    let dir = tempdir("zero");
    let opts = TrainOptions {
        out_dir: Some(dir.clone()),
        ..TrainOptions::default()
    };
    let out = train(&mut model, TrainData::Frozen(&data), &opts).unwrap();
    assert!(out.metrics.is_empty());
    let ck = load_checkpoint(dir.join("checkpoint-final.stat")).unwrap();
    assert_eq!(ck.iteration, 0);
    for (a, b) in ck.model.parameters().iter().zip(init.parameters()) {
        assert_eq!(a.tensor.to_vec(), b.tensor.to_vec());
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn training_is_seed_deterministic_and_resumable() {
    let data = tiny_data(6, 9);
    let run = |tag: &str| {
        let mut model = StaModel::new(tiny_config(), &mut seeded(20)).unwrap();
        let dir = tempdir(tag);
        let opts = TrainOptions {
            out_dir: Some(dir.clone()),
            ..TrainOptions::default()
        };
        let out = train(&mut model, TrainData::Frozen(&data), &opts).unwrap();
        let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
        (model, out, csv, dir)
    };
    let (m1, o1, csv1, d1) = run("det-a");
    let (m2, _, csv2, d2) = run("det-b");
    assert_eq!(metrics_digest(&csv1), metrics_digest(&csv2));
    assert_eq!(o1.metrics.len(), 6);
    assert_eq!(o1.metrics[2].stage, Stage::One);
    assert_eq!(o1.metrics[3].stage, Stage::Two);
    for (a, b) in m1.parameters().iter().zip(m2.parameters()) {
        assert_eq!(a.tensor.to_vec(), b.tensor.to_vec());
    }
    for row in &o1.metrics {
        let t = &row.terms;
        assert!(t.kl_z0 >= 0.0 && t.kl_spike_init >= 0.0 && t.kl_spike_trans >= 0.0 && t.kl_slab >= 0.0);
    }

    // Interrupt after iteration 2 and resume from the checkpoint.
    let dir = tempdir("resume");
    let mut model = StaModel::new(tiny_config(), &mut seeded(20)).unwrap();
    let first = TrainOptions {
        out_dir: Some(dir.clone()),
        stop_at: Some(2),
        ..TrainOptions::default()
    };
    train(&mut model, TrainData::Frozen(&data), &first).unwrap();
    let ck = load_checkpoint(dir.join("checkpoint-000002.stat")).unwrap();
    assert_eq!(ck.iteration, 2);
    let mut resumed = ck.model;
    let second = TrainOptions {
        out_dir: Some(dir.clone()),
        resume: Some((ck.adam, ck.iteration)),
        ..TrainOptions::default()
    };
    let out = train(&mut resumed, TrainData::Frozen(&data), &second).unwrap();
    assert_eq!(out.metrics[0].iteration, 2);
    for (a, b) in out.metrics.iter().zip(&o1.metrics[2..]) {
        assert_eq!(a.terms, b.terms);
    }
    let csv = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics_digest(&csv), metrics_digest(&csv1));
    for (a, b) in resumed.parameters().iter().zip(m1.parameters()) {
        assert_eq!(a.tensor.to_vec(), b.tensor.to_vec());
    }
    for d in [d1, d2, dir] {
        std::fs::remove_dir_all(d).ok();
    }
}

#[test]
fn stage_boundary_keeps_spike_parameters_continuous() {
    let mut cfg = tiny_config();
    cfg.lr = 1e-3;
    let data = tiny_data(4, 10);
    let mut model = StaModel::new(cfg.clone(), &mut seeded(21)).unwrap();
    let opts = TrainOptions {
        stop_at: Some(3),
        ..TrainOptions::default()
    };
    let out = train(&mut model, TrainData::Frozen(&data), &opts).unwrap();
    let before = model.clone();
    let opts = TrainOptions {
        stop_at: Some(4),
        resume: Some((out.adam, 3)),
        ..TrainOptions::default()
    };
    let out = train(&mut model, TrainData::Frozen(&data), &opts).unwrap();
    assert_eq!(out.metrics[0].stage, Stage::Two);
    for (a, b) in model.code_net.parameters().iter().zip(before.code_net.parameters()) {
        let step = a
            .tensor
            .data()
            .iter()
            .zip(b.tensor.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        // An Adam step moves each weight by at most about lr.
        assert!(step <= 10.0 * cfg.lr, "{} jumped by {step}", a.name);
    }
}

#[test]
fn nonfinite_loss_aborts_with_dump() {
    let mut model = StaModel::new(tiny_config(), &mut seeded(22)).unwrap();
    let w = &mut model.decoder.layers[2].bias;
    let mut v = w.tensor.to_vec();
    v[0] = f64::NAN;
    w.set_data(v).unwrap();
    let data = tiny_data(2, 11);
    let dir = tempdir("nan");
    let opts = TrainOptions {
        out_dir: Some(dir.clone()),
        ..TrainOptions::default()
    };
    match train(&mut model, TrainData::Frozen(&data), &opts) {
        Err(StaError::NonFinite { iteration, .. }) => assert_eq!(iteration, 0),
        other => panic!("expected a non-finite error, got {:?}", other.map(|o| o.iteration)),
    }
    assert!(dir.join("nonfinite-0.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn online_training_runs() {
    let mut model = StaModel::new(tiny_config(), &mut seeded(23)).unwrap();
    let data = tiny_data(1, 0);
    let out = train(&mut model, TrainData::Online(&data.config), &TrainOptions::default()).unwrap();
    assert_eq!(out.metrics.len(), 6);
    let mut other = tiny_config();
    other.fields = 3;
    other.spike = SpikeChainConfig::new(3);
    let mut model = StaModel::new(other, &mut seeded(23)).unwrap();
    assert!(matches!(
        train(&mut model, TrainData::Frozen(&data), &TrainOptions::default()),
        Err(StaError::Incompatible(_))
    ));
}
