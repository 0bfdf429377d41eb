//! Trains anisotropic and optimal-transport flows on a 2D quadratic well and
//! compares held-out NLL with the true stationary density.
//!
//! `cargo run --release --example train_quadratic_well -- 2000`

use hifm::data::{langevin_generate, split, DataKind, LangevinConfig};
use hifm::energy::{Energy, QuadraticParams};
use hifm::likelihood::{sample, LearnedField, Prior, Rk45Config};
use hifm::model::AdamWConfig;
use hifm::train::{train_loop, Method, TrainConfig};
use rand::SeedableRng;

fn main() -> hifm::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let energy = QuadraticParams::diagonal(&[1.0, 25.0])?;
    let cfg = LangevinConfig { n: 1200, thin: 200, seed: 7, ..Default::default() };
    let (train, eval) = split(&langevin_generate(&energy, &cfg, DataKind::Generic)?, 0.8, 1)?;
    let truth = eval
        .rows()
        .map(|y| energy.value(y).map(|v| v + (2.0 * std::f64::consts::PI).ln() - 0.5 * 25f64.ln()))
        .sum::<hifm::Result<f64>>()?
        / eval.len() as f64;
    println!("true density NLL on held-out points: {truth:.4}");

    for method in [Method::HessianQuadratic, Method::OptimalTransport] {
        let cfg = TrainConfig {
            method,
            steps,
            hidden: vec![64, 64],
            optimizer: AdamWConfig { lr: 2e-3, ..Default::default() },
            eval_every: steps / 3,
            ..Default::default()
        };
        let (model, log) = train_loop(&cfg, &train, Some(&eval), Some(&energy))?;
        for r in log.rows.iter().filter(|r| r.eval_nll.is_some()) {
            println!("{:<18} step {:>5}  nll {:.4}  nfe {:.1}", method.name(), r.step, r.eval_nll.unwrap(), r.eval_nfe.unwrap());
        }
        let field = LearnedField::new(&model, None);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (ys, _) = sample(&field, &Prior::StandardNormal { dim: 2 }, &Rk45Config::default(), &mut rng, 500, 1.0)?;
        let var = |k: usize| ys.chunks(2).map(|y| y[k] * y[k]).sum::<f64>() / 500.0;
        println!("{:<18} sample variances {:.3} {:.3} (target 1, 0.04)", method.name(), var(0), var(1));
    }
    Ok(())
}
