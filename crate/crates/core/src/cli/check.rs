//! Built-in verification suite: closed forms against simulation, transport
//! identities and finite-difference derivative checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::energy::{fd_gradient, fd_hessian, zero_com_in_place, Energy, FormationParams, LennardJonesParams, QuadraticParams};
use crate::flow::{cond_field_finite, interpolant_mean, mean_cov_time, mean_cov_z, random_flow_spec};
use crate::likelihood::{nll_one, rk45, ConditionalField, Prior, Rk45Config};
use crate::linalg::{from_spectrum, norm, random_orthogonal, sub, SymMatrix};
use crate::model::{loss_and_grad, sample_loss, LossSample, MlpParams, ModeConfig};
use crate::spectrum::{build_flow_spec, FlowConfig, FlowFlags, Spectrum};

/// Relative shift applied to reference values when a check is perturbed.
pub const PERTURBATION: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn shift(perturb: bool) -> f64 {
    if perturb {
        1.0 + PERTURBATION
    } else {
        1.0
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b)) / norm(b).max(1e-300)
}

/// Euler–Maruyama paths of `dy = -A(y - y1) dt + B dw` against the closed-form
/// moments at `horizon`. Every mean and covariance entry must lie within
/// 5 standard errors.
pub fn ou_moments(n_specs: usize, n_paths: usize, dt: f64, horizon: f64, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n_specs {
        let dim = rng.random_range(1..=6);
        let nulls = rng.random_range(0..dim);
        let fs = random_flow_spec(&mut rng, dim, nulls);
        let y0: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = fs.basis();
        let a = p.compose(fs.alphas());
        let b = p.compose(&fs.beta);
        let s0 = p.compose(&fs.sigma0.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
        let steps = (horizon / dt).round() as usize;
        let path_seed: u64 = rng.random();
        let ends: Vec<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|k| {
                let mut r = ChaCha8Rng::seed_from_u64(path_seed.wrapping_add(k as u64));
                let mut noise = |n: usize| -> Vec<f64> { (0..n).map(|_| r.sample(StandardNormal)).collect() };
                let mut y: Vec<f64> = y0.iter().zip(s0.matvec(&noise(dim))).map(|(m, e)| m + e).collect();
                let sq = dt.sqrt();
                for _ in 0..steps {
                    let drift = a.matvec(&sub(&y, &fs.y1));
                    let kick = b.matvec(&noise(dim));
                    for i in 0..dim {
                        y[i] += -drift[i] * dt + kick[i] * sq;
                    }
                }
                y
            })
            .collect();
        let g = mean_cov_time(&fs, &y0, horizon).expect("valid time");
        let cov = p.compose(&g.var);
        let n = n_paths as f64;
        let mean: Vec<f64> = (0..dim).map(|i| ends.iter().map(|y| y[i]).sum::<f64>() / n).collect();
        for i in 0..dim {
            let se = (cov.get(i, i) / n).sqrt();
            worst = worst.max((mean[i] - shift(perturb) * g.mean[i]).abs() / se.max(1e-300));
            for j in 0..=i {
                let prods: Vec<f64> = ends.iter().map(|y| (y[i] - mean[i]) * (y[j] - mean[j])).collect();
                let c = prods.iter().sum::<f64>() / n;
                let v = prods.iter().map(|q| (q - c) * (q - c)).sum::<f64>() / n;
                let se = (v / n).sqrt();
                worst = worst.max((c - shift(perturb) * cov.get(i, j)).abs() / se.max(1e-300));
            }
        }
    }
    CheckResult::new(
        "ou_moments",
        worst <= 5.0,
        format!("max deviation {worst:.2} standard errors (limit 5) over {n_specs} specs x {n_paths} paths"),
    )
}

/// Moments addressed by `z = µz(t)` equal the moments at time `t`.
pub fn interpolant_identity(n: usize, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let dim = rng.random_range(1..=6);
        let nulls = rng.random_range(0..dim);
        let fs = random_flow_spec(&mut rng, dim, nulls);
        let y0: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let t = rng.random_range(0.0..3.0);
        let a = mean_cov_time(&fs, &y0, t).expect("valid time");
        let b = mean_cov_z(&fs, &y0, interpolant_mean(&fs, t)).expect("valid z");
        for (x, y) in a.mean.iter().chain(&a.var).zip(b.mean.iter().chain(&b.var)) {
            worst = worst.max((x * shift(perturb) - y).abs() / x.abs().max(1.0));
        }
    }
    CheckResult::new(
        "interpolant_identity",
        worst <= 1e-12,
        format!("max deviation {worst:.2e} (limit 1e-12) over {n} cases"),
    )
}

/// Integrating the conditional finite field from `µ(0) = y0` reaches the
/// closed-form mean at `z_max`.
pub fn transport_identity(n: usize, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = Rk45Config::with_tol(1e-8, 1e-8);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..n {
        let dim = rng.random_range(1..=6);
        let nulls = rng.random_range(0..dim);
        let fs = random_flow_spec(&mut rng, dim, nulls);
        let y0: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let end = mean_cov_z(&fs, &y0, fs.z_max).expect("valid z").mean;
        match rk45(|z, y| cond_field_finite(&fs, y, z, &y0), &y0, (0.0, fs.z_max), &cfg) {
            Ok((y, _)) => {
                let target: Vec<f64> = end.iter().map(|v| v * shift(perturb)).collect();
                worst = worst.max(rel_err(&y, &target));
            }
            Err(_) => failures += 1,
        }
    }
    CheckResult::new(
        "transport_identity",
        failures == 0 && worst <= 1e-5,
        format!("max relative error {worst:.2e} (limit 1e-5), {failures} failed integrations over {n} specs"),
    )
}

/// NLL from divergence integration of the conditional field equals the
/// closed-form Gaussian log-density at `z_max`.
pub fn nll_oracle(n: usize, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = Rk45Config::with_tol(1e-8, 1e-8);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..n {
        let dim = rng.random_range(2..=6);
        let mut fs = random_flow_spec(&mut rng, dim, 0);
        fs.sigma0 = vec![1.0; dim];
        let g = mean_cov_z(&fs, &vec![0.0; dim], fs.z_max).expect("valid z");
        let y = g.sample(&mut rng);
        let exact = -g.log_density(&y).expect("positive variances");
        match nll_one(&ConditionalField::new(&fs), &y, &cfg, &Prior::StandardNormal { dim }, fs.z_max) {
            Ok(r) => worst = worst.max((r.nll - shift(perturb) * exact).abs()),
            Err(_) => failures += 1,
        }
    }
    CheckResult::new(
        "nll_oracle",
        failures == 0 && worst <= 1e-2,
        format!("max |nll - closed form| {worst:.2e} nats (limit 1e-2), {failures} failed integrations over {n} draws"),
    )
}

fn random_cloud(m: usize, d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut y: Vec<f64> = (0..m * d).map(|_| rng.random_range(-1.5..1.5)).collect();
    zero_com_in_place(&mut y, d);
    y
}

/// Null counts of formation-energy Hessians at satisfied formations.
pub fn nullspace_counts(seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = vec![(2, 3, 5)];
    for m in [4, 7, 13] {
        cases.push((m, 2, 3));
        cases.push((m, 3, 6));
    }
    let mut bad = Vec::new();
    for (m, d, expect) in cases {
        let y = random_cloud(m, d, &mut rng);
        let count = FormationParams::complete_from_sample(&y, m, d)
            .and_then(|e| e.hessian(&y))
            .and_then(|h| Spectrum::analyze(&h, 1e-8))
            .map(|s| s.null_count());
        let expect = expect + usize::from(perturb);
        if count.as_ref().ok() != Some(&expect) {
            bad.push(format!("m={m} d={d}: {count:?}, expected {expect}"));
        }
    }
    let detail = if bad.is_empty() {
        "2-agent 3D: 5; 4/7/13 agents: 3 (2D), 6 (3D)".to_string()
    } else {
        bad.join("; ")
    };
    CheckResult::new("nullspace_counts", bad.is_empty(), detail)
}

/// `rescale_condition(c)` gives `α_max/α_min = c` and keeps `α_min`.
pub fn condition_numbers(n: usize, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for k in 0..n {
        let c = [1.0, 2.0, 10.0][k % 3];
        let dim = rng.random_range(2..=8);
        let mut d: Vec<f64> = (0..dim).map(|_| rng.random_range(0.1..50.0)).collect();
        let nulls = rng.random_range(0..dim - 1);
        d.iter_mut().take(nulls).for_each(|v| *v = 0.0);
        let q = random_orthogonal(dim, &mut rng);
        let s = Spectrum::analyze(&from_spectrum(&q, &d), 1e-8).expect("symmetric input");
        let before = s.alpha_min().expect("a positive eigenvalue");
        let r = s.rescale_condition(c).expect("valid c");
        let cond = r.condition_number().expect("a positive eigenvalue");
        worst = worst
            .max((cond - shift(perturb) * c).abs() / c)
            .max((r.alpha_min().unwrap_or(f64::NAN) - before).abs() / before);
    }
    CheckResult::new(
        "condition_numbers",
        worst <= 1e-12,
        format!("max relative error {worst:.2e} (limit 1e-12) over {n} spectra"),
    )
}

fn lj_config(m: usize, d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let y: Vec<f64> = (0..m * d).map(|_| rng.random_range(0.0..1.8)).collect();
        let far = (0..m).all(|i| {
            (0..i).all(|j| {
                let r: f64 = (0..d).map(|k| (y[i * d + k] - y[j * d + k]).powi(2)).sum();
                r.sqrt() > 0.9
            })
        });
        if far {
            return y;
        }
    }
}

/// Analytic energy gradients and Hessians, network parameter gradients and
/// network directional derivatives against central differences.
pub fn gradient_checks(n_configs: usize, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = shift(perturb);
    let (mut g_err, mut h_err) = (0.0f64, 0.0f64);
    let q = random_orthogonal(4, &mut rng);
    let quad = QuadraticParams::new(vec![0.3, -0.2, 0.1, 0.5], from_spectrum(&q, &[0.5, 1.0, 3.0, 7.0])).expect("valid");
    let lj = LennardJonesParams::new(4, 3, 1.0, 1.0).expect("valid");
    for _ in 0..n_configs {
        let target = random_cloud(5, 2, &mut rng);
        let form = FormationParams::complete_from_sample(&target, 5, 2).expect("valid");
        let cases: [(&dyn Energy, Vec<f64>); 3] = [
            (&quad, (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()),
            (&lj, lj_config(4, 3, &mut rng)),
            (&form, random_cloud(5, 2, &mut rng)),
        ];
        for (e, y) in cases {
            let g: Vec<f64> = e.gradient(&y).expect("valid").iter().map(|v| v * s).collect();
            g_err = g_err.max(rel_err(&g, &fd_gradient(e, &y, 1e-5).expect("valid")));
            let h: Vec<f64> = e.hessian(&y).expect("valid").as_slice().iter().map(|v| v * s).collect();
            h_err = h_err.max(rel_err(&h, fd_hessian(e, &y, 1e-5).expect("valid").as_slice()));
        }
    }

    let (mut w_err, mut j_err) = (0.0f64, 0.0f64);
    for trial in 0..5 {
        let dim = 3;
        let p = MlpParams::init(&MlpParams::widths_for(dim, &[8, 6]), seed + trial).expect("valid");
        let proj = SymMatrix::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / dim as f64);
        let batch: Vec<LossSample> = (0..6)
            .map(|_| LossSample {
                y: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
                z: rng.random_range(0.0..1.0),
                target_vy: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
                target_vz: rng.random_range(0.5..2.0),
                projector: Some(&proj),
            })
            .collect();
        for finite in [false, true] {
            let mode = ModeConfig {
                finite,
                particle_dim: None,
            };
            let grad = loss_and_grad(&p, &batch, None, &mode).expect("valid").grad;
            let loss_at = |q: &MlpParams| -> f64 {
                batch
                    .iter()
                    .map(|b| {
                        let (vy, vz) = q.forward(&b.y, b.z).expect("valid");
                        sample_loss(&vy, vz, b, &mode).0
                    })
                    .sum::<f64>()
                    / batch.len() as f64
            };
            let idx: Vec<usize> = (0..20).map(|_| rng.random_range(0..p.n_params())).collect();
            let (mut a, mut f) = (Vec::new(), Vec::new());
            for &k in &idx {
                let h = 1e-6;
                let mut q = p.clone();
                q.params_mut()[k] += h;
                let up = loss_at(&q);
                q.params_mut()[k] -= 2.0 * h;
                let down = loss_at(&q);
                a.push(grad[k] * s);
                f.push((up - down) / (2.0 * h));
            }
            w_err = w_err.max(rel_err(&a, &f));
        }
        let y: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let z = rng.random_range(0.0..1.0);
        let t: Vec<f64> = (0..=dim).map(|_| rng.sample(StandardNormal)).collect();
        let (dy, dz) = p.jvp(&y, z, &t).expect("valid");
        let h = 1e-5;
        let at = |e: f64| {
            let yy: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a + e * b).collect();
            let (mut v, vz) = p.forward(&yy, z + e * t[dim]).expect("valid");
            v.push(vz);
            v
        };
        let fd: Vec<f64> = at(h).iter().zip(at(-h)).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let mut an: Vec<f64> = dy.iter().map(|v| v * s).collect();
        an.push(dz * s);
        j_err = j_err.max(rel_err(&an, &fd));
    }
    let passed = g_err < 1e-6 && h_err < 1e-5 && w_err < 1e-4 && j_err < 1e-6;
    CheckResult::new(
        "gradient_checks",
        passed,
        format!(
            "energy gradient {g_err:.1e} (<1e-6), Hessian {h_err:.1e} (<1e-5), network weights {w_err:.1e} (<1e-4), jvp {j_err:.1e} (<1e-6)"
        ),
    )
}

/// With projection on, adding null-direction components to the predicted
/// `v_y` leaves the loss unchanged.
pub fn projection_invariance(n: usize, seed: u64, perturb: bool) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for trial in 0..n {
        let (m, d) = if trial % 2 == 0 { (5, 2) } else { (4, 3) };
        let y1 = random_cloud(m, d, &mut rng);
        let cfg = FlowConfig {
            flags: FlowFlags {
                finite: true,
                project: true,
                hyperbolize: rng.random_bool(0.5),
                isotropize: false,
            },
            particle_dim: Some(d),
            ..FlowConfig::default()
        };
        let h = FormationParams::complete_from_sample(&y1, m, d)
            .and_then(|e| e.hessian(&y1))
            .expect("valid formation");
        let fs = build_flow_spec(y1.clone(), &h, &cfg).expect("valid spectrum");
        let proj = fs.spectrum.hyperbolic_projector();
        let null = fs.spectrum.null_projector();
        let z = rng.random_range(0.0..fs.z_max);
        let y = crate::flow::sample_path_point(&fs, z, &mut rng).expect("valid z").y;
        let (tvy, tvz) = crate::flow::cond_field_z(&fs, &y, z, &vec![0.0; m * d]).expect("valid");
        let sample = LossSample {
            y,
            z,
            target_vy: tvy,
            target_vz: tvz,
            projector: Some(&proj),
        };
        let mode = ModeConfig {
            finite: true,
            particle_dim: Some(d),
        };
        let vy: Vec<f64> = (0..m * d).map(|_| rng.sample(StandardNormal)).collect();
        let vz = rng.random_range(0.5..2.0);
        let w: Vec<f64> = (0..m * d).map(|_| rng.sample(StandardNormal)).collect();
        let shifted: Vec<f64> = vy.iter().zip(null.matvec(&w)).map(|(a, b)| a + b).collect();
        let base = sample_loss(&vy, vz, &sample, &mode).0;
        let moved = sample_loss(&shifted, vz, &sample, &mode).0;
        worst = worst.max((base * shift(perturb) - moved).abs());
    }
    CheckResult::new(
        "projection_invariance",
        worst <= 1e-12,
        format!("max loss change {worst:.2e} (limit 1e-12) over {n} trials"),
    )
}

/// The quick suite run by `hifm check`.
pub fn run_all(perturb: bool) -> Vec<CheckResult> {
    vec![
        ou_moments(3, 2000, 2e-3, 1.0, 11, perturb),
        interpolant_identity(100, 12, perturb),
        transport_identity(10, 13, perturb),
        nll_oracle(10, 14, perturb),
        nullspace_counts(15, perturb),
        condition_numbers(99, 16, perturb),
        gradient_checks(10, 17, perturb),
        projection_invariance(20, 18, perturb),
    ]
}
