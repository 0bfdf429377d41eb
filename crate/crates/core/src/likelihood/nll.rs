use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::field::FiniteField;
use super::rk45::{rk45, Rk45Config, Rk45Stats};
use crate::energy::{zero_com_in_place, zero_com_project};
use crate::error::{check_dim, HifmError, Result};

/// Base density at `z = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prior {
    /// `N(0, I)` on `R^dim`.
    StandardNormal { dim: usize },
    /// `N(0, I)` restricted to the zero center-of-mass subspace of `m`
    /// particles, a space of dimension `(m - 1) · spatial_dim`.
    ZeroCom { m: usize, spatial_dim: usize },
}

impl Prior {
    pub fn for_data(dim: usize, particle_dim: Option<usize>) -> Self {
        match particle_dim {
            Some(d) => Prior::ZeroCom {
                m: dim / d,
                spatial_dim: d,
            },
            None => Prior::StandardNormal { dim },
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Prior::StandardNormal { dim } => dim,
            Prior::ZeroCom { m, spatial_dim } => m * spatial_dim,
        }
    }

    /// Dimension of the support.
    pub fn support_dim(&self) -> usize {
        match *self {
            Prior::StandardNormal { dim } => dim,
            Prior::ZeroCom { m, spatial_dim } => (m - 1) * spatial_dim,
        }
    }

    pub fn particle_dim(&self) -> Option<usize> {
        match *self {
            Prior::StandardNormal { .. } => None,
            Prior::ZeroCom { spatial_dim, .. } => Some(spatial_dim),
        }
    }

    /// Log-density on the support; particle inputs are first projected onto it.
    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        let sq: f64 = match self.particle_dim() {
            Some(d) => zero_com_project(y, d).iter().map(|v| v * v).sum(),
            None => y.iter().map(|v| v * v).sum(),
        };
        let k = self.support_dim() as f64;
        Ok(-0.5 * sq - 0.5 * k * (2.0 * std::f64::consts::PI).ln())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut y: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(d) = self.particle_dim() {
            zero_com_in_place(&mut y, d);
        }
        y
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NllRecord {
    pub index: usize,
    /// Negative log-likelihood in nats; NaN when the integration failed.
    pub nll: f64,
    /// `log p_prior(y(0))`.
    pub prior_term: f64,
    /// `-∫₀^{z_end} div v dz`.
    pub divergence_term: f64,
    pub stats: Rk45Stats,
    /// `None` on success, otherwise the failure message.
    pub error: Option<String>,
}

impl NllRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn status(&self) -> &str {
        self.error.as_deref().unwrap_or("ok")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NllReport {
    pub records: Vec<NllRecord>,
}

impl NllReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| !r.ok()).count()
    }

    /// Mean NLL over successful samples (NaN if none succeeded).
    pub fn mean_nll(&self) -> f64 {
        mean(self.records.iter().filter(|r| r.ok()).map(|r| r.nll))
    }

    pub fn mean_nfe(&self) -> f64 {
        mean(self.records.iter().filter(|r| r.ok()).map(|r| r.stats.nfe as f64))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["sample_index", "nll", "nfe", "accepted", "rejected", "status"])
            .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                format!("{:.10e}", r.nll),
                r.stats.nfe.to_string(),
                r.stats.accepted.to_string(),
                r.stats.rejected.to_string(),
                r.status().to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> HifmError {
    HifmError::Format(e.to_string())
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// NLL of one point observed at `z = z_end`: integrates `(y, ℓ)` with
/// `dy/dz = v`, `dℓ/dz = div v` from `z_end` back to 0 and returns
/// `-(log p_prior(y(0)) + ℓ(0))`.
pub fn nll_one(field: &impl FiniteField, y: &[f64], cfg: &Rk45Config, prior: &Prior, z_end: f64) -> Result<NllRecord> {
    let n = field.dim();
    check_dim(n, y.len())?;
    check_dim(n, prior.dim())?;
    let mut x0 = y.to_vec();
    x0.push(0.0);
    let (x, stats) = rk45(
        |z, x| {
            let (mut v, div) = field.velocity_and_divergence(&x[..n], z)?;
            v.push(div);
            Ok(v)
        },
        &x0,
        (z_end, 0.0),
        cfg,
    )?;
    let prior_term = prior.log_density(&x[..n])?;
    let divergence_term = x[n];
    let nll = -(prior_term + divergence_term);
    if !nll.is_finite() {
        return Err(HifmError::Numerical(format!(
            "non-finite NLL (log prior {prior_term:e}, divergence integral {divergence_term:e})"
        )));
    }
    Ok(NllRecord {
        index: 0,
        nll,
        prior_term,
        divergence_term,
        stats,
        error: None,
    })
}

/// Per-sample NLL over row-major `data`. Failed integrations are recorded and
/// skipped in the means.
pub fn nll(field: &impl FiniteField, data: &[f64], cfg: &Rk45Config, prior: &Prior, z_end: f64) -> Result<NllReport> {
    let n = field.dim();
    if n == 0 || data.len() % n != 0 {
        return Err(HifmError::Validation(format!(
            "data length {} is not a multiple of the dimension {n}",
            data.len()
        )));
    }
    check_dim(n, prior.dim())?;
    let records = data
        .par_chunks(n)
        .enumerate()
        .map(|(i, y)| match nll_one(field, y, cfg, prior, z_end) {
            Ok(r) => NllRecord { index: i, ..r },
            Err(e) => NllRecord {
                index: i,
                nll: f64::NAN,
                prior_term: f64::NAN,
                divergence_term: f64::NAN,
                stats: Rk45Stats::default(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(NllReport { records })
}

/// Pushes `n` prior draws through the field from `z = 0` to `z_end`.
/// Returns the row-major samples and the mean NFE.
pub fn sample(
    field: &impl FiniteField,
    prior: &Prior,
    cfg: &Rk45Config,
    rng: &mut impl Rng,
    n: usize,
    z_end: f64,
) -> Result<(Vec<f64>, f64)> {
    let dim = field.dim();
    check_dim(dim, prior.dim())?;
    // all randomness is drawn up front so results do not depend on threads
    let starts: Vec<Vec<f64>> = (0..n).map(|_| prior.sample(rng)).collect();
    let out: Vec<(Vec<f64>, Rk45Stats)> = starts
        .par_iter()
        .map(|y0| rk45(|z, y| field.velocity(y, z), y0, (0.0, z_end), cfg))
        .collect::<Result<_>>()?;
    let nfe = mean(out.iter().map(|(_, s)| s.nfe as f64));
    Ok((out.into_iter().flat_map(|(y, _)| y).collect(), if n == 0 { 0.0 } else { nfe }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{mean_cov_z, random_flow_spec as random_spec};
    use crate::likelihood::field::{ConditionalField, ZeroField};
    use crate::spectrum::{FlowConfig, FlowSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_field_gives_the_prior() {
        let prior = Prior::StandardNormal { dim: 2 };
        let r = nll_one(&ZeroField { dim: 2 }, &[0.0, 0.0], &Rk45Config::default(), &prior, 1.0).unwrap();
        assert!((r.nll - (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert_eq!(r.stats.nfe, 7);
        let y = [0.3, -1.2];
        let r = nll_one(&ZeroField { dim: 2 }, &y, &Rk45Config::default(), &prior, 1.0).unwrap();
        assert!((r.nll + prior.log_density(&y).unwrap()).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (s, _) = sample(&ZeroField { dim: 2 }, &prior, &Rk45Config::default(), &mut rng.clone(), 5, 1.0).unwrap();
        let direct: Vec<f64> = (0..5).flat_map(|_| prior.sample(&mut rng)).collect();
        assert_eq!(s, direct);
    }

    #[test]
    fn zero_com_prior_normalization() {
        // 3 particles on a line: support dimension 2
        let p = Prior::ZeroCom { m: 3, spatial_dim: 1 };
        assert_eq!(p.support_dim(), 2);
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        assert!((p.log_density(&[0.0; 3]).unwrap() + ln2pi).abs() < 1e-15);
        // a translation does not change the density
        let a = p.log_density(&[1.0, -0.5, -0.5]).unwrap();
        let b = p.log_density(&[3.0, 1.5, 1.5]).unwrap();
        assert!((a - b).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = p.sample(&mut rng);
        assert!(s.iter().sum::<f64>().abs() < 1e-14);
    }

    #[test]
    fn conditional_field_reproduces_the_gaussian_path_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 2..5 {
            let base = random_spec(&mut rng, dim, 0);
            let fs = FlowSpec::from_parts(
                base.y1.clone(),
                base.spectrum.clone(),
                base.spectrum.diffusion_coeffs(0.05, true).unwrap(),
                &FlowConfig {
                    kappa: base.kappa,
                    gamma: 0.05,
                    ..FlowConfig::default()
                },
            )
            .unwrap();
            let z_end = 0.9;
            let g = mean_cov_z(&fs, &vec![0.0; dim], z_end).unwrap();
            let y = g.sample(&mut rng);
            let prior = Prior::StandardNormal { dim };
            let cfg = Rk45Config::with_tol(1e-9, 1e-9);
            let r = nll_one(&ConditionalField::new(&fs), &y, &cfg, &prior, z_end).unwrap();
            let exact = -g.log_density(&y).unwrap();
            assert!((r.nll - exact).abs() < 1e-5, "dim {dim}: {} vs {exact}", r.nll);
        }
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        struct Blowup;
        impl FiniteField for Blowup {
            fn dim(&self) -> usize {
                1
            }
            fn velocity(&self, y: &[f64], _: f64) -> Result<Vec<f64>> {
                Ok(vec![if y[0] > 0.0 { f64::NAN } else { 0.0 }])
            }
            fn velocity_and_divergence(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
                Ok((self.velocity(y, z)?, 0.0))
            }
        }
        let rep = nll(&Blowup, &[-1.0, 1.0, -2.0], &Rk45Config::default(), &Prior::StandardNormal { dim: 1 }, 1.0).unwrap();
        assert_eq!(rep.failures(), 1);
        assert!(rep.records[1].nll.is_nan() && rep.records[1].status().contains("non-finite"));
        assert!(rep.mean_nll().is_finite());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nll.csv");
        rep.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_index,nll,nfe,accepted,rejected,status"));
        assert_eq!(text.lines().count(), 4);
    }
}
