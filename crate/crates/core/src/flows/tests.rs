use super::*;
use crate::rng::seeded;
use crate::tensor::{finite_diff_check, no_grad};

fn linear_potential(c: Vec<f64>) -> PotentialFn {
    Arc::new(move |z: &Tensor, _t: &Tensor| {
        let d = c.len();
        z.matmul(&Tensor::from_vec(c.clone(), &[d, 1])?)
    })
}

fn quadratic_potential() -> PotentialFn {
    Arc::new(|z: &Tensor, _t: &Tensor| Ok(z.square()?.sum_axis(1)?.scale(0.5)?.expand_axis(1, 1)?))
}

/// `u = ½ zᵀ diag(h) z`.
fn diag_quadratic(h: Vec<f64>) -> PotentialFn {
    Arc::new(move |z: &Tensor, _t: &Tensor| {
        let (b, _) = z.dims2()?;
        let w: Vec<f64> = (0..b).flat_map(|_| h.iter().copied()).collect();
        Ok(z.square()?.mask(w)?.sum_axis(1)?.scale(0.5)?.expand_axis(1, 1)?)
    })
}

/// `u = c·z − t‖c‖²/2`, an exact Hamilton–Jacobi solution.
fn hj_solution(c: Vec<f64>) -> PotentialFn {
    let half_sq: f64 = 0.5 * c.iter().map(|v| v * v).sum::<f64>();
    let lin = linear_potential(c);
    Arc::new(move |z: &Tensor, t: &Tensor| lin(z, t)?.sub(&t.scale(half_sq)?))
}

/// `r(z) = z·Aᵀ`, i.e. `r = A z` per row.
fn linear_field(a: Vec<f64>, d: usize) -> VectorFieldFn {
    Arc::new(move |z: &Tensor| z.matmul_t(&Tensor::from_vec(a.clone(), &[d, d])?, false, true))
}

fn zero_potential() -> PotentialFn {
    Arc::new(|z: &Tensor, _t: &Tensor| Ok(z.slice(1, 0, 1)?.scale(0.0)?))
}

fn mlp_bank(d: usize, k: usize, seed: u64) -> FlowFieldBank {
    let mut cfg = FlowConfig::new(d, k);
    cfg.hidden = 12;
    cfg.embed_dim = 6;
    FlowFieldBank::new(&cfg, &mut seeded(seed)).unwrap()
}

fn point(v: &[f64]) -> Tensor {
    Tensor::from_vec(v.to_vec(), &[1, v.len()]).unwrap()
}

fn codes(v: &[f64]) -> Tensor {
    point(v)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn time_embedding_shape_and_values() {
    let e = TimeEmbedding::new(6).unwrap();
    assert!(TimeEmbedding::new(5).is_err());
    assert_eq!(e.frequencies[0], 1.0);
    let out = e.embed(&Tensor::full(&[2, 1], 0.0)).unwrap();
    assert_eq!(out.shape(), &[2, 6]);
    assert_eq!(out.to_vec(), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
}

#[test]
fn gradient_of_linear_and_quadratic_potentials() {
    let c = vec![0.3, -1.2, 2.0];
    let bank = FlowFieldBank::analytic(3, vec![linear_potential(c.clone()), quadratic_potential()], vec![None, None]).unwrap();
    for z in [[0.0, 0.0, 0.0], [1.5, -2.0, 0.7]] {
        let g = potential_gradient(&bank, 0, &point(&z), 1.0).unwrap();
        assert_eq!(g.to_vec(), c);
        let g = potential_gradient(&bank, 1, &point(&z), 1.0).unwrap();
        assert_eq!(g.to_vec(), z.to_vec());
    }
}

#[test]
fn mlp_potential_gradient_matches_finite_differences() {
    let bank = mlp_bank(4, 1, 3);
    let z = [0.3, -0.8, 1.1, 0.2];
    let g = potential_gradient(&bank, 0, &point(&z), 2.0).unwrap().to_vec();
    let _ng = no_grad();
    let u = |v: &[f64]| bank.potential(0, &point(v), &time_column(2.0, 1)).unwrap().item();
    let h = 1e-5;
    for i in 0..4 {
        let mut p = z;
        p[i] += h;
        let mut m = z;
        m[i] -= h;
        let fd = (u(&p) - u(&m)) / (2.0 * h);
        assert!((fd - g[i]).abs() / fd.abs().max(1e-3) < 1e-5, "{i}: {fd} vs {}", g[i]);
    }
}

#[test]
fn laplacian_oracles() {
    let bank = FlowFieldBank::analytic(
        4,
        vec![quadratic_potential(), linear_potential(vec![1.0, 2.0, 3.0, 4.0])],
        vec![None, None],
    )
    .unwrap();
    let z = point(&[0.2, -0.4, 1.0, 3.0]);
    assert_eq!(laplacian(&bank, 0, &z, 1.0).unwrap().to_vec(), vec![4.0]);
    assert_eq!(laplacian(&bank, 1, &z, 1.0).unwrap().to_vec(), vec![0.0]);
}

#[test]
fn mlp_laplacian_matches_finite_difference_hessian_trace() {
    let bank = mlp_bank(3, 1, 8);
    let z = [0.4, -0.1, 0.9];
    let lap = laplacian(&bank, 0, &point(&z), 1.0).unwrap().item();
    let _ng = no_grad();
    let u = |v: &[f64]| bank.potential(0, &point(v), &time_column(1.0, 1)).unwrap().item();
    let h = 1e-3;
    let u0 = u(&z);
    let mut fd = 0.0;
    for i in 0..3 {
        let mut p = z;
        p[i] += h;
        let mut m = z;
        m[i] -= h;
        fd += (u(&p) - 2.0 * u0 + u(&m)) / (h * h);
    }
    assert!((fd - lap).abs() / lap.abs().max(1e-3) < 1e-4, "{fd} vs {lap}");
}

#[test]
fn divergence_oracles() {
    let rot = linear_field(vec![0.0, -1.0, 1.0, 0.0], 2);
    let a = vec![0.5, 0.2, -0.3, 1.5];
    let bank = FlowFieldBank::analytic(
        2,
        vec![zero_potential(), zero_potential()],
        vec![Some(rot), Some(linear_field(a, 2))],
    )
    .unwrap();
    let z = Tensor::from_vec(vec![0.3, 0.9, -2.0, 4.0], &[2, 2]).unwrap();
    let div = divergence(&bank, 0, &z).unwrap();
    assert!(div.data().iter().all(|v| v.abs() < 1e-10));
    let div = divergence(&bank, 1, &z).unwrap();
    assert!(close(div.data(), &[2.0, 2.0], 1e-12));
}

#[test]
fn mlp_divergence_matches_hutchinson() {
    let bank = mlp_bank(5, 1, 21);
    let z = Tensor::from_vec(vec![0.2, -0.5, 0.9, 0.1, -1.2], &[1, 5]).unwrap();
    let exact = divergence(&bank, 0, &z).unwrap().item();
    let (mean, err) = hutchinson_divergence(&bank, 0, &z, 1000, &mut seeded(5)).unwrap();
    assert!((mean[0] - exact).abs() <= 3.0 * err[0].max(1e-12), "{exact} vs {} ± {}", mean[0], err[0]);
}

#[test]
fn jets_agree_with_reverse_mode() {
    let bank = mlp_bank(3, 2, 17);
    let z = Tensor::from_vec(vec![0.1, 0.4, -0.7, 1.3, -0.2, 0.5], &[2, 3]).unwrap();
    let t = 3.0;
    for k in 0..2 {
        let f = bank.evaluate(k, &z, t, Needs::ALL).unwrap();
        let gu = potential_gradient(&bank, k, &z, t).unwrap();
        assert!(close(f.grad_u.data(), gu.data(), 1e-12));
        let dt = time_derivative(&bank, k, &z, t).unwrap();
        assert!(close(f.dt_u.unwrap().data(), dt.data(), 1e-12));
        let lap = laplacian(&bank, k, &z, t).unwrap();
        assert!(close(f.lap_u.unwrap().data(), lap.data(), 1e-12));
        let div = divergence(&bank, k, &z).unwrap();
        assert!(close(f.div_r.unwrap().data(), div.data(), 1e-12));
        let r = bank.rotational(k, &z).unwrap();
        assert!(close(f.r.unwrap().data(), r.data(), 1e-14));
    }
}

#[test]
fn time_derivative_through_embedding_matches_finite_differences() {
    let bank = mlp_bank(2, 1, 4);
    let z = point(&[0.6, -0.3]);
    let dt = time_derivative(&bank, 0, &z, 2.5).unwrap().item();
    let _ng = no_grad();
    let u = |t: f64| bank.potential(0, &z, &time_column(t, 1)).unwrap().item();
    let h = 1e-5;
    let fd = (u(2.5 + h) - u(2.5 - h)) / (2.0 * h);
    assert!((fd - dt).abs() / fd.abs().max(1e-3) < 1e-6);
}

#[test]
fn flow_step_examples() {
    let c = vec![0.5, -1.0];
    let c2 = vec![2.0, 0.25];
    let bank = FlowFieldBank::analytic(2, vec![linear_potential(c.clone()), linear_potential(c2.clone())], vec![None, None]).unwrap();
    let z = point(&[0.3, 0.7]);
    let same = flow_step(&bank, &z, &codes(&[0.0, 0.0]), 1.0).unwrap();
    assert_eq!(same.to_vec(), z.to_vec());
    let one = flow_step(&bank, &z, &codes(&[0.4, 0.0]), 1.0).unwrap();
    assert!(close(one.data(), &[0.3 + 0.4 * 0.5, 0.7 - 0.4], 1e-15));

    let mlp = mlp_bank(2, 2, 9);
    let g = [0.7, 1.3];
    let both = flow_step(&mlp, &z, &codes(&g), 2.0).unwrap();
    let mut expected = z.to_vec();
    for k in 0..2 {
        let gu = potential_gradient(&mlp, k, &z, 2.0).unwrap();
        let r = mlp.rotational(k, &z).unwrap();
        for i in 0..2 {
            expected[i] += g[k] * (gu.data()[i] + r.data()[i]);
        }
    }
    assert!(close(both.data(), &expected, 1e-14));
}

#[test]
fn separate_controls_reduce_to_standard_step() {
    let bank = mlp_bank(3, 2, 12);
    let z = Tensor::from_vec(vec![0.2, -0.3, 0.5, 1.0, 0.0, -0.4], &[2, 3]).unwrap();
    let gt = Tensor::from_vec(vec![0.9, 1.1, 0.3, 1.4], &[2, 2]).unwrap();
    let y = Tensor::from_vec(vec![1.0, 0.0, 0.6, 1.0], &[2, 2]).unwrap();
    let sep = flow_step_separate(&bank, &z, &gt, &y, &y, 1.0).unwrap();
    let std = flow_step(&bank, &z, &gt.mul(&y).unwrap(), 1.0).unwrap();
    assert_eq!(sep.to_vec(), std.to_vec());

    let rot = linear_field(vec![0.0, -1.0, 1.0, 0.0], 2);
    let analytic = FlowFieldBank::analytic(2, vec![linear_potential(vec![1.0, 2.0])], vec![Some(rot)]).unwrap();
    let z = point(&[0.5, 0.25]);
    let g = codes(&[0.5]);
    let pot = flow_step_separate(&analytic, &z, &g, &codes(&[1.0]), &codes(&[0.0]), 1.0).unwrap();
    assert!(close(pot.data(), &[1.0, 1.25], 1e-15));
    // r(z) = (-z₂, z₁)
    let rot = flow_step_separate(&analytic, &z, &g, &codes(&[0.0]), &codes(&[1.0]), 1.0).unwrap();
    assert!(close(rot.data(), &[0.5 - 0.125, 0.25 + 0.25], 1e-15));
}

#[test]
fn step_is_linear_in_the_code() {
    let bank = mlp_bank(3, 2, 30);
    let z = point(&[0.1, 0.2, -0.3]);
    let g = [0.8, -0.35];
    let base = flow_step(&bank, &z, &codes(&g), 1.0).unwrap();
    for alpha in [0.5, 2.0, -1.0] {
        let scaled = flow_step(&bank, &z, &codes(&[alpha * g[0], alpha * g[1]]), 1.0).unwrap();
        for i in 0..3 {
            let lhs = scaled.data()[i] - z.data()[i];
            let rhs = alpha * (base.data()[i] - z.data()[i]);
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }
}

#[test]
fn loss_div_examples() {
    let rot = linear_field(vec![0.0, -1.0, 1.0, 0.0], 2);
    let a = vec![0.5, 0.2, -0.3, 1.5];
    let bank = FlowFieldBank::analytic(2, vec![zero_potential(), zero_potential()], vec![Some(rot), Some(linear_field(a, 2))]).unwrap();
    let z0 = point(&[0.4, -0.6]);
    let lq = Tensor::zeros(&[1]);
    let c = vec![codes(&[1.3, 0.0]), codes(&[0.7, 0.0])];
    let traj = LatentTrajectory::rollout(&bank, &z0, &lq, &c).unwrap();
    assert!(loss_div(&bank, &traj, &c).unwrap().item().abs() < 1e-20);

    let zero = vec![codes(&[0.0, 0.0])];
    let traj = LatentTrajectory::rollout(&bank, &z0, &lq, &zero).unwrap();
    assert_eq!(loss_div(&bank, &traj, &zero).unwrap().item(), 0.0);

    let g = 0.6;
    let one = vec![codes(&[0.0, g])];
    let traj = LatentTrajectory::rollout(&bank, &z0, &lq, &one).unwrap();
    let expected = (g * 2.0f64).powi(2);
    assert!((loss_div(&bank, &traj, &one).unwrap().item() - expected).abs() < 1e-12);
}

#[test]
fn loss_hj_examples() {
    let c = vec![0.7, -1.1, 0.4];
    let bank = FlowFieldBank::analytic(
        3,
        vec![hj_solution(c.clone()), linear_potential(c.clone())],
        vec![None, None],
    )
    .unwrap();
    let z0 = Tensor::from_vec(vec![0.1, 0.2, 0.3, -1.0, 2.0, 0.5], &[2, 3]).unwrap();
    let lq = Tensor::zeros(&[2]);
    let g = 0.8;
    let steps = vec![Tensor::from_vec(vec![g, 0.0, g, 0.0], &[2, 2]).unwrap(); 3];
    let traj = LatentTrajectory::rollout(&bank, &z0, &lq, &steps).unwrap();
    assert!(loss_hj(&bank, &traj, &steps).unwrap().item() < 1e-10);

    // time-independent linear potential: residual ½‖c‖² per active term
    let steps = vec![Tensor::from_vec(vec![0.0, g, 0.0, g], &[2, 2]).unwrap(); 2];
    let traj = LatentTrajectory::rollout(&bank, &z0, &lq, &steps).unwrap();
    let half_sq: f64 = 0.5 * c.iter().map(|v| v * v).sum::<f64>();
    let expected = g * half_sq * half_sq;
    assert!((loss_hj(&bank, &traj, &steps).unwrap().item() - expected).abs() < 1e-12);

    let zero = vec![Tensor::zeros(&[2, 2])];
    let traj = LatentTrajectory::rollout(&bank, &z0, &lq, &zero).unwrap();
    assert_eq!(loss_hj(&bank, &traj, &zero).unwrap().item(), 0.0);
}

#[test]
fn log_density_step_quadratic() {
    let bank = FlowFieldBank::analytic(2, vec![quadratic_potential()], vec![None]).unwrap();
    let lq = Tensor::from_vec(vec![-1.5], &[1]).unwrap();
    let z = point(&[0.3, 0.1]);
    let out = log_density_step(&bank, &lq, &z, &codes(&[0.1]), 1.0).unwrap();
    assert!((out.item() - (-1.7)).abs() < 1e-15);
    let out = log_density_step(&bank, &lq, &z, &codes(&[0.0]), 1.0).unwrap();
    assert_eq!(out.item(), -1.5);
}

/// Exact `log|det ∂z'/∂z|` of one step, from the autodiff Jacobian.
fn exact_log_det(bank: &FlowFieldBank, z: &[f64], g: f64) -> f64 {
    let zt = point(z).requiring_grad();
    let next = flow_step(bank, &zt, &codes(&[g]), 1.0).unwrap();
    let mut jac = [[0.0; 2]; 2];
    for (i, row) in jac.iter_mut().enumerate() {
        let gi = grad(&next.slice(1, i, 1).unwrap().sum().unwrap(), &[zt.clone()], false)
            .unwrap()
            .remove(0);
        row.copy_from_slice(gi.data());
    }
    (jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0]).abs().ln()
}

#[test]
fn log_density_step_matches_change_of_variables() {
    let bank = FlowFieldBank::analytic(
        2,
        vec![diag_quadratic(vec![0.5, 0.3])],
        vec![Some(linear_field(vec![0.0, 0.2, -0.2, 0.0], 2))],
    )
    .unwrap();
    let z = [0.7, -0.2];
    let lq = Tensor::zeros(&[1]);
    let mut errors = Vec::new();
    for g in [0.1, 0.05, 0.025] {
        let approx = -log_density_step(&bank, &lq, &point(&z), &codes(&[g]), 1.0).unwrap().item();
        let exact = exact_log_det(&bank, &z, g);
        let err = (approx - exact).abs();
        assert!(err < 5e-3, "g={g}: {err}");
        errors.push(err);
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn prior_log_pdf_examples() {
    let z = Tensor::zeros(&[1, 2]);
    let v = prior_log_pdf(&z, &Tensor::zeros(&[1])).unwrap().item();
    assert!((v + (2.0 * PI).ln()).abs() < 1e-15);
    let v = prior_log_pdf_value(&[0.0], 0.5).unwrap();
    assert!((v + 0.5 * (2.0 * PI * 2.0).ln()).abs() < 1e-15);
    assert!(prior_log_pdf_value(&[0.0], -0.1).is_err());
    assert!(prior_log_pdf(&z, &Tensor::full(&[1], -1.0)).is_err());
    let zz = Tensor::from_vec(vec![0.3, -1.2, 2.0, 0.5], &[2, 2]).unwrap();
    let e = Tensor::from_vec(vec![0.2, 1.7], &[2]).unwrap();
    let t = prior_log_pdf(&zz, &e).unwrap();
    assert!((t.data()[0] - prior_log_pdf_value(&[0.3, -1.2], 0.2).unwrap()).abs() < 1e-14);
    assert!((t.data()[1] - prior_log_pdf_value(&[2.0, 0.5], 1.7).unwrap()).abs() < 1e-14);
}

#[test]
fn prior_matches_heat_equation_grid() {
    // ∂p/∂e = ∂²p/∂z², started from N(0, 1), explicit Euler in e.
    let (lo, hi, dz) = (-12.0, 12.0, 0.05);
    let n = ((hi - lo) / dz) as usize + 1;
    let zs: Vec<f64> = (0..n).map(|i| lo + i as f64 * dz).collect();
    let mut p: Vec<f64> = zs.iter().map(|&z| prior_log_pdf_value(&[z], 0.0).unwrap().exp()).collect();
    let target = 0.5;
    let de = 0.2 * dz * dz;
    let steps = (target / de).round() as usize;
    let de = target / steps as f64;
    for _ in 0..steps {
        let mut next = p.clone();
        for i in 1..n - 1 {
            next[i] = p[i] + de * (p[i + 1] - 2.0 * p[i] + p[i - 1]) / (dz * dz);
        }
        p = next;
    }
    let sup = zs
        .iter()
        .zip(&p)
        .map(|(&z, &v)| (v - prior_log_pdf_value(&[z], target).unwrap().exp()).abs())
        .fold(0.0, f64::max);
    assert!(sup < 1e-3, "{sup}");
}

#[test]
fn flow_parameter_gradients_pass_finite_differences() {
    let bank = mlp_bank(2, 2, 44);
    let z0 = Tensor::from_vec(vec![0.3, -0.5, 0.8, 0.1], &[2, 2]).unwrap();
    let lq = Tensor::zeros(&[2]);
    let steps = vec![
        Tensor::from_vec(vec![0.9, 0.0, 0.4, 1.2], &[2, 2]).unwrap(),
        Tensor::from_vec(vec![1.1, 0.3, 0.0, 0.7], &[2, 2]).unwrap(),
    ];
    let names: Vec<String> = bank.parameters().iter().map(|p| p.name.clone()).collect();
    for name in names.iter().filter(|n| n.contains("layer0") || n.contains("diffusion")) {
        let f = |x: &Tensor| -> Result<Tensor> {
            let mut b = bank.clone();
            for p in b.parameters_mut() {
                if &p.name == name {
                    p.tensor = x.clone();
                }
            }
            let traj = LatentTrajectory::rollout(&b, &z0, &lq, &steps)?;
            let last = traj.states.last().unwrap().square()?.sum()?;
            let lqt = traj.log_density.last().unwrap().sum()?;
            let e = b.diffusion()?.sum()?;
            loss_div(&b, &traj, &steps)?
                .add(&loss_hj(&b, &traj, &steps)?)?
                .add(&last)?
                .add(&lqt)?
                .add(&e)
        };
        let x = bank.parameters().into_iter().find(|p| &p.name == name).unwrap().tensor.clone();
        let report = finite_diff_check(f, &x, 1e-6, 1e-4).unwrap();
        assert!(report.passed, "{name}: {}", report.max_rel_err);
    }
}

#[test]
fn squared_gradient_norm_parameter_gradient() {
    let bank = mlp_bank(3, 1, 2);
    let z = point(&[0.5, -0.2, 0.1]);
    let name = "flow.0.potential.layer1.weight";
    let f = |x: &Tensor| -> Result<Tensor> {
        let mut b = bank.clone();
        for p in b.parameters_mut() {
            if p.name == name {
                p.tensor = x.clone();
            }
        }
        potential_gradient(&b, 0, &z, 1.0)?.square()?.sum()
    };
    let x = bank.parameters().into_iter().find(|p| p.name == name).unwrap().tensor.clone();
    let report = finite_diff_check(f, &x, 1e-6, 1e-5).unwrap();
    assert!(report.passed, "{}", report.max_rel_err);
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

    #[test]
    fn hj_solution_residual_vanishes(c in proptest::collection::vec(-3.0f64..3.0, 3), t in 0.0f64..10.0) {
        let bank = FlowFieldBank::analytic(3, vec![hj_solution(c)], vec![None]).unwrap();
        let z = point(&[0.2, -0.7, 1.4]);
        let f = bank.evaluate(0, &z, t, Needs::ALL).unwrap();
        let res = hj_residual(&[f], &codes(&[1.0])).unwrap().item();
        proptest::prop_assert!(res < 1e-10);
    }

    #[test]
    fn antisymmetric_field_is_divergence_free(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0,
                                               z in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let m = vec![0.0, a, b, -a, 0.0, c, -b, -c, 0.0];
        let bank = FlowFieldBank::analytic(3, vec![zero_potential()], vec![Some(linear_field(m, 3))]).unwrap();
        let div = divergence(&bank, 0, &point(&z)).unwrap().item();
        proptest::prop_assert!(div.abs() < 1e-10);
    }

    #[test]
    fn zero_code_step_is_identity(z in proptest::collection::vec(-3.0f64..3.0, 3), seed in 0u64..50) {
        let bank = mlp_bank(3, 2, seed);
        let zt = point(&z);
        let out = flow_step(&bank, &zt, &codes(&[0.0, 0.0]), 1.0).unwrap();
        proptest::prop_assert_eq!(out.to_vec(), z);
    }

    #[test]
    fn physics_losses_are_nonnegative(z in proptest::collection::vec(-2.0f64..2.0, 3),
                                       g in proptest::collection::vec(-1.0f64..2.0, 2), seed in 0u64..50) {
        let bank = mlp_bank(3, 2, seed);
        let steps = vec![codes(&g)];
        let traj = LatentTrajectory::rollout(&bank, &point(&z), &Tensor::zeros(&[1]), &steps).unwrap();
        proptest::prop_assert!(loss_div(&bank, &traj, &steps).unwrap().item() >= 0.0);
        proptest::prop_assert!(loss_hj(&bank, &traj, &steps).unwrap().item() >= 0.0);
    }
}
