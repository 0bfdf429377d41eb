//! Formation-energy flows on a Lennard-Jones cluster of 7 atoms, with and
//! without hyperbolized nullspaces.
//!
//! `cargo run --release --example lj_cluster_flows -- 600`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hifm::data::{lattice_start, langevin_generate, split, DataKind, Dataset, LangevinConfig};
use hifm::energy::{apply_rigid_motion, random_rotation, LennardJonesParams};
use hifm::train::{train_loop, Method, TrainConfig};

fn main() -> hifm::Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(400);
    let (m, d) = (7, 3);
    let energy = LennardJonesParams::new(m, d, 1.0, 1.0)?;
    let cfg = LangevinConfig {
        tau: 0.05,
        n: 300,
        thin: 200,
        init: Some(lattice_start(m, d, 2f64.powf(1.0 / 6.0))),
        ..Default::default()
    };
    let kind = DataKind::Particles { m, spatial_dim: d };
    let ds = langevin_generate(&energy, &cfg, kind)?;
    // random orientations, so rotations are part of what is learned
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows = Vec::with_capacity(ds.samples().len());
    for y in ds.rows() {
        rows.extend(apply_rigid_motion(y, &random_rotation(d, &mut rng), &[0.0; 3], d)?);
    }
    let (train, eval) = split(&Dataset::new(rows, m * d, kind, "lj7")?, 0.8, 1)?;

    for hyperbolize in [true, false] {
        let mut cfg = TrainConfig {
            method: Method::HessianFormation,
            steps,
            batch_size: 128,
            eval_every: steps,
            ..Default::default()
        };
        cfg.flags.hyperbolize = hyperbolize;
        let (_, log) = train_loop(&cfg, &train, Some(&eval), None)?;
        let (nll, nfe) = log.last_eval().unwrap_or((f64::NAN, f64::NAN));
        println!(
            "hyperbolize={hyperbolize:<5} loss {:.3} -> {:.3}  eval nll {nll:.3}  nfe {nfe:.1}",
            log.mean_loss(0, 50),
            log.mean_loss(steps.saturating_sub(50), steps + 1)
        );
    }
    Ok(())
}
