use rayon::prelude::*;

use super::MlpParams;
use crate::energy::zero_com_in_place;
use crate::error::{check_dim, HifmError, Result};
use crate::linalg::{dot, SymMatrix};

/// Lower clamp applied to the model's `v_z` before dividing by it.
pub const MODEL_VZ_FLOOR: f64 = 1e-3;
/// Samples per work unit in the batched loss; fixes the reduction order.
const CHUNK: usize = 16;

/// How raw `(v_y, v_z)` pairs are compared.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeConfig {
    /// Compare `[v_y / v_z, 1]` instead of `(v_y, v_z)`.
    pub finite: bool,
    /// Spatial dimension for zero center-of-mass projection of `v_y`.
    pub particle_dim: Option<usize>,
}

/// Result of [`mode_transform`].
#[derive(Clone, Debug, PartialEq)]
pub struct Transformed {
    pub vy: Vec<f64>,
    pub vz: f64,
    /// `v_z` was raised to the floor before division.
    pub clamped: bool,
}

/// The transform shared by targets and model outputs: optional division by
/// `max(v_z, vz_floor)`, then optional projection of `v_y` with `projector`
/// and onto zero center of mass.
pub fn mode_transform(
    vy: &[f64],
    vz: f64,
    mode: &ModeConfig,
    vz_floor: f64,
    projector: Option<&SymMatrix>,
) -> Transformed {
    let (mut out, out_z, clamped) = if mode.finite {
        let clamped = vz < vz_floor;
        let d = if clamped { vz_floor } else { vz };
        (vy.iter().map(|v| v / d).collect::<Vec<_>>(), 1.0, clamped)
    } else {
        (vy.to_vec(), vz, false)
    };
    if let Some(p) = projector {
        out = p.matvec(&out);
    }
    if let Some(d) = mode.particle_dim {
        zero_com_in_place(&mut out, d);
    }
    Transformed {
        vy: out,
        vz: out_z,
        clamped,
    }
}

/// One regression sample at `x = [y, z]`; targets are raw, untransformed.
#[derive(Clone, Debug)]
pub struct LossSample<'a> {
    pub y: Vec<f64>,
    pub z: f64,
    pub target_vy: Vec<f64>,
    pub target_vz: f64,
    /// Projector onto the directions in which fields are matched.
    pub projector: Option<&'a SymMatrix>,
}

/// Squared error between transformed model outputs and transformed targets.
pub fn sample_loss(model_vy: &[f64], model_vz: f64, s: &LossSample, mode: &ModeConfig) -> (f64, bool) {
    let m = mode_transform(model_vy, model_vz, mode, MODEL_VZ_FLOOR, s.projector);
    let t = mode_transform(&s.target_vy, s.target_vz, mode, 0.0, s.projector);
    let e: f64 = m.vy.iter().zip(&t.vy).map(|(a, b)| (a - b) * (a - b)).sum();
    (e + (m.vz - t.vz) * (m.vz - t.vz), m.clamped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Number of samples whose predicted `v_z` hit the floor.
    pub clamp_count: usize,
}

/// Mean (optionally weighted) loss over the batch and its exact gradient.
pub fn loss_and_grad(p: &MlpParams, batch: &[LossSample], weights: Option<&[f64]>, mode: &ModeConfig) -> Result<LossOutput> {
    if batch.is_empty() {
        return Err(HifmError::Validation("empty batch".into()));
    }
    if let Some(w) = weights {
        check_dim(batch.len(), w.len())?;
    }
    let dim = p.dim();
    for s in batch {
        check_dim(dim, s.y.len())?;
        check_dim(dim, s.target_vy.len())?;
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(f64, Vec<f64>, usize)> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = vec![0.0; p.n_params()];
            let mut loss = 0.0;
            let mut clamps = 0;
            let xs: Vec<Vec<f64>> = chunk
                .iter()
                .map(|s| {
                    let mut x = s.y.clone();
                    x.push(s.z);
                    x
                })
                .collect();
            p.batch_vjp(
                &xs,
                |k, out| {
                    let s = &chunk[k];
                    let w = weights.map_or(1.0, |w| w[c * CHUNK + k]) * scale;
                    let (vy, vz) = out.split_at(dim);
                    let vz = vz[0];
                    let (l, clamped) = sample_loss(vy, vz, s, mode);
                    loss += w * l;
                    clamps += clamped as usize;
                    pullback(vy, vz, s, mode, w)
                },
                &mut grad,
            );
            (loss, grad, clamps)
        })
        .collect();
    let mut out = LossOutput {
        loss: 0.0,
        grad: vec![0.0; p.n_params()],
        clamp_count: 0,
    };
    for (l, g, c) in parts {
        out.loss += l;
        out.clamp_count += c;
        out.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

/// Cotangent of `w · sample_loss` with respect to the raw model output.
fn pullback(vy: &[f64], vz: f64, s: &LossSample, mode: &ModeConfig, w: f64) -> Vec<f64> {
    let m = mode_transform(vy, vz, mode, MODEL_VZ_FLOOR, s.projector);
    let t = mode_transform(&s.target_vy, s.target_vz, mode, 0.0, s.projector);
    // both projections are symmetric and idempotent
    let mut r: Vec<f64> = m.vy.iter().zip(&t.vy).map(|(a, b)| 2.0 * w * (a - b)).collect();
    if let Some(d) = mode.particle_dim {
        zero_com_in_place(&mut r, d);
    }
    if let Some(p) = s.projector {
        r = p.matvec(&r);
    }
    if mode.finite {
        let d = if m.clamped { MODEL_VZ_FLOOR } else { vz };
        let gz = if m.clamped { 0.0 } else { -dot(&r, vy) / (d * d) };
        let mut g: Vec<f64> = r.iter().map(|v| v / d).collect();
        g.push(gz);
        g
    } else {
        r.push(2.0 * w * (m.vz - t.vz));
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh_sym, subspace_projector, DEFAULT_EIG_TOL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn batch<'a>(rng: &mut impl Rng, n: usize, dim: usize, proj: Option<&'a SymMatrix>) -> Vec<LossSample<'a>> {
        (0..n)
            .map(|_| LossSample {
                y: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                z: rng.random_range(0.0..1.0),
                target_vy: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
                target_vz: rng.random_range(0.2..2.0),
                projector: proj,
            })
            .collect()
    }

    fn rotated_projector(dim: usize, keep: usize, rng: &mut impl Rng) -> SymMatrix {
        let q = crate::linalg::random_orthogonal(dim, rng);
        let d: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64).collect();
        let e = eigh_sym(&crate::linalg::from_spectrum(&q, &d), DEFAULT_EIG_TOL).unwrap();
        let mask: Vec<bool> = (0..dim).map(|i| i < keep).collect();
        subspace_projector(&e, &mask).unwrap()
    }

    #[test]
    fn transform_examples() {
        let fin = ModeConfig {
            finite: true,
            particle_dim: None,
        };
        let t = mode_transform(&[2.0, -4.0], 2.0, &fin, MODEL_VZ_FLOOR, None);
        assert_eq!(t, Transformed { vy: vec![1.0, -2.0], vz: 1.0, clamped: false });
        let t = mode_transform(&[2.0, -4.0], -0.5, &fin, MODEL_VZ_FLOOR, None);
        assert!(t.clamped && t.vy[0] == 2.0 / MODEL_VZ_FLOOR);
        let inf = ModeConfig { finite: false, ..fin };
        assert_eq!(mode_transform(&[2.0], 3.0, &inf, MODEL_VZ_FLOOR, None).vz, 3.0);
        let com = ModeConfig { particle_dim: Some(1), ..inf };
        assert_eq!(mode_transform(&[1.0, 3.0], 1.0, &com, 0.0, None).vy, vec![-1.0, 1.0]);
    }

    #[test]
    fn model_equal_to_target_gives_zero_loss_and_gradient() {
        let p = MlpParams::init(&[3, 6, 3], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for finite in [false, true] {
            let mode = ModeConfig { finite, particle_dim: None };
            let b: Vec<_> = batch(&mut rng, 8, 2, None)
                .into_iter()
                .filter_map(|mut s| {
                    let (vy, vz) = p.forward(&s.y, s.z).unwrap();
                    s.target_vy = vy;
                    s.target_vz = vz;
                    (vz > MODEL_VZ_FLOOR).then_some(s)
                })
                .collect();
            if b.is_empty() {
                continue;
            }
            let out = loss_and_grad(&p, &b, None, &mode).unwrap();
            assert_eq!(out.loss, 0.0);
            assert!(out.grad.iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let proj = rotated_projector(3, 2, &mut rng);
        for (finite, projected, particles) in [(false, false, None), (true, false, None), (true, true, None), (false, true, Some(1))] {
            let mut p = MlpParams::init(&[4, 8, 8, 4], 3).unwrap();
            // push v_z away from the floor so finite differences stay on one branch
            let n = p.n_params();
            p.params_mut()[n - 1] = 2.0;
            let row = n - 4 - 8;
            p.params_mut()[row..row + 8].iter_mut().for_each(|w| *w *= 0.05);
            let mode = ModeConfig { finite, particle_dim: particles };
            let b = batch(&mut rng, 37, 3, projected.then_some(&proj));
            let w: Vec<f64> = (0..b.len()).map(|_| rng.random_range(0.5..1.5)).collect();
            let out = loss_and_grad(&p, &b, Some(&w), &mode).unwrap();
            assert_eq!(out.clamp_count, 0);
            for _ in 0..20 {
                let k = rng.random_range(0..n);
                let h = 1e-6;
                let mut qp = p.clone();
                let mut qm = p.clone();
                qp.params_mut()[k] += h;
                qm.params_mut()[k] -= h;
                let lp = loss_and_grad(&qp, &b, Some(&w), &mode).unwrap().loss;
                let lm = loss_and_grad(&qm, &b, Some(&w), &mode).unwrap().loss;
                let fd = (lp - lm) / (2.0 * h);
                let g = out.grad[k];
                assert!((fd - g).abs() <= 1e-4 * g.abs().max(1e-3), "finite={finite} param {k}: {fd} vs {g}");
            }
        }
    }

    #[test]
    fn projected_loss_ignores_null_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hyp = rotated_projector(4, 3, &mut rng);
        let null = SymMatrix::identity(4).add(&hyp.scaled(-1.0));
        let mode = ModeConfig { finite: true, particle_dim: None };
        for s in batch(&mut rng, 20, 4, Some(&hyp)) {
            let vy: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let vz = rng.random_range(0.1..1.0);
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let nw = null.matvec(&w);
            let shifted: Vec<f64> = vy.iter().zip(&nw).map(|(a, b)| a + b).collect();
            let (a, _) = sample_loss(&vy, vz, &s, &mode);
            let (b, _) = sample_loss(&shifted, vz, &s, &mode);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_loss_is_deterministic_and_thread_independent() {
        let p = MlpParams::init(&[3, 16, 3], 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = batch(&mut rng, 50, 2, None);
        let mode = ModeConfig { finite: true, particle_dim: None };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| loss_and_grad(&p, &b, None, &mode).unwrap());
        let c = three.install(|| loss_and_grad(&p, &b, None, &mode).unwrap());
        assert_eq!(a, c);
        assert!(a.loss >= 0.0);
        assert!(loss_and_grad(&p, &[], None, &mode).is_err());
    }
}
