use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hifm::linalg::{dot, from_spectrum, random_orthogonal};
use hifm::model::{loss_and_grad, LossSample, MlpParams, ModeConfig};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Moving the output head only along nullspace directions of `v_y` leaves
    /// the projected loss unchanged, so the gradient has no component there.
    #[test]
    fn projected_gradient_ignores_null_directions(seed in 0u64..10_000, dim in 2usize..6, finite: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nulls = rng.random_range(1..dim);
        let q = random_orthogonal(dim, &mut rng);
        let mask: Vec<f64> = (0..dim).map(|k| if k < nulls { 0.0 } else { 1.0 }).collect();
        let proj = from_spectrum(&q, &mask);
        let p = MlpParams::init(&MlpParams::widths_for(dim, &[7, 5]), seed).unwrap();
        let batch: Vec<LossSample> = (0..9)
            .map(|_| LossSample {
                y: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                z: rng.random_range(0.05..0.95),
                target_vy: (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect(),
                target_vz: rng.random_range(0.2..2.0),
                projector: Some(&proj),
            })
            .collect();
        let mode = ModeConfig { finite, particle_dim: None };
        let g = loss_and_grad(&p, &batch, None, &mode).unwrap().grad;

        let hidden = 5;
        let head = p.n_params() - (hidden + 1) * (dim + 1);
        let (gw, gb) = g[head..].split_at(hidden * (dim + 1));
        let scale = g.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for k in 0..nulls {
            let u = &q[k];
            // bias direction (u, 0)
            prop_assert!(dot(u, &gb[..dim]).abs() < 1e-10 * scale);
            // weight direction u ⊗ a for a random a
            let a: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
            let along: f64 = (0..dim).map(|o| u[o] * dot(&a, &gw[o * hidden..(o + 1) * hidden])).sum();
            prop_assert!(along.abs() < 1e-10 * scale);
        }
    }
}
