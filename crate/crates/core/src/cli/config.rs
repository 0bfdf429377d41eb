//! Flat `key = value` run configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{DataKind, Dataset};
use crate::energy::{EnergyModel, FormationParams, LennardJonesParams, QuadraticParams};
use crate::error::{HifmError, Result};
use crate::train::{Method, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyKind {
    None,
    Quadratic,
    LennardJones,
    Formation,
}

impl EnergyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EnergyKind::None),
            "quadratic" => Ok(EnergyKind::Quadratic),
            "lj" => Ok(EnergyKind::LennardJones),
            "formation" => Ok(EnergyKind::Formation),
            _ => Err(HifmError::Validation(format!(
                "unknown energy '{s}' (expected none, quadratic, lj or formation)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnergyKind::None => "none",
            EnergyKind::Quadratic => "quadratic",
            EnergyKind::LennardJones => "lj",
            EnergyKind::Formation => "formation",
        }
    }
}

/// Which energy to build and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySpec {
    pub kind: EnergyKind,
    /// Eigenvalues of the diagonal quadratic energy.
    pub eigs: Vec<f64>,
    pub lj_epsilon: f64,
    pub lj_sigma: f64,
}

impl Default for EnergySpec {
    fn default() -> Self {
        Self {
            kind: EnergyKind::Quadratic,
            eigs: vec![1.0, 25.0],
            lj_epsilon: 1.0,
            lj_sigma: 1.0,
        }
    }
}

impl EnergySpec {
    /// Builds the energy for `dim`-dimensional data. Formation energies take
    /// their target distances from `reference`.
    pub fn build(&self, dim: usize, particle: Option<(usize, usize)>, reference: Option<&[f64]>) -> Result<Option<EnergyModel>> {
        let need_particles = || {
            particle.ok_or_else(|| HifmError::Validation(format!("energy '{}' needs particle data", self.kind.name())))
        };
        Ok(Some(match self.kind {
            EnergyKind::None => return Ok(None),
            EnergyKind::Quadratic => {
                if self.eigs.len() != dim {
                    return Err(HifmError::Validation(format!(
                        "quadratic energy has {} eigenvalues but the data have dimension {dim}",
                        self.eigs.len()
                    )));
                }
                QuadraticParams::diagonal(&self.eigs)?.into()
            }
            EnergyKind::LennardJones => {
                let (m, d) = need_particles()?;
                LennardJonesParams::new(m, d, self.lj_epsilon, self.lj_sigma)?.into()
            }
            EnergyKind::Formation => {
                let (m, d) = need_particles()?;
                let y = reference.ok_or_else(|| HifmError::Validation("formation energy needs a reference configuration".into()))?;
                FormationParams::complete_from_sample(y, m, d)?.into()
            }
        }))
    }
}

/// Everything a `train` run reads.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub energy: EnergySpec,
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    /// Treat generic (CSV) data as particles in this many dimensions.
    pub spatial_dim: Option<usize>,
}

pub const KEYS: &[&str] = &[
    "data",
    "eval_data",
    "spatial_dim",
    "energy",
    "quad_eigs",
    "lj_epsilon",
    "lj_sigma",
    "method",
    "finite",
    "project",
    "hyperbolize",
    "isotropize",
    "c",
    "gamma",
    "kappa",
    "sigma_min",
    "eps",
    "batch_size",
    "steps",
    "seed",
    "z_max",
    "zero_tol",
    "hidden",
    "lr",
    "weight_decay",
    "vz_bias",
    "eval_every",
    "eval_rtol",
    "eval_atol",
    "sample_y0",
    "log_wall_time",
];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse()
        .map_err(|e| HifmError::Validation(format!("bad value '{v}' for '{key}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn opt<T: FromStr>(key: &str, v: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    if v == "none" {
        Ok(None)
    } else {
        parse(key, v).map(Some)
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn show_opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("none".into(), |x| x.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "data" => self.data = opt(key, v)?,
            "eval_data" => self.eval_data = opt(key, v)?,
            "spatial_dim" => self.spatial_dim = opt(key, v)?,
            "energy" => self.energy.kind = EnergyKind::parse(v)?,
            "quad_eigs" => self.energy.eigs = parse_list(key, v)?,
            "lj_epsilon" => self.energy.lj_epsilon = parse(key, v)?,
            "lj_sigma" => self.energy.lj_sigma = parse(key, v)?,
            "method" => t.method = Method::parse(v)?,
            "finite" => t.flags.finite = parse(key, v)?,
            "project" => t.flags.project = parse(key, v)?,
            "hyperbolize" => t.flags.hyperbolize = parse(key, v)?,
            "isotropize" => t.flags.isotropize = parse(key, v)?,
            "c" => t.c = opt(key, v)?,
            "gamma" => t.gamma = parse(key, v)?,
            "kappa" => t.kappa = parse(key, v)?,
            "sigma_min" => t.sigma_min = parse(key, v)?,
            "eps" => t.eps = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "steps" => t.steps = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "z_max" => t.z_max = parse(key, v)?,
            "zero_tol" => t.zero_tol = parse(key, v)?,
            "hidden" => t.hidden = parse_list(key, v)?,
            "lr" => t.optimizer.lr = parse(key, v)?,
            "weight_decay" => t.optimizer.weight_decay = parse(key, v)?,
            "vz_bias" => t.vz_bias = parse(key, v)?,
            "eval_every" => t.eval_every = parse(key, v)?,
            "eval_rtol" => t.eval_rtol = parse(key, v)?,
            "eval_atol" => t.eval_atol = parse(key, v)?,
            "sample_y0" => t.sample_y0 = parse(key, v)?,
            "log_wall_time" => t.log_wall_time = parse(key, v)?,
            _ => {
                return Err(HifmError::Validation(format!(
                    "unknown config key '{key}' (known keys: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let p = |v: &Option<PathBuf>| v.as_ref().map_or("none".into(), |p| p.display().to_string());
        KEYS.iter()
            .map(|&k| {
                let v = match k {
                    "data" => p(&self.data),
                    "eval_data" => p(&self.eval_data),
                    "spatial_dim" => show_opt(&self.spatial_dim),
                    "energy" => self.energy.kind.name().into(),
                    "quad_eigs" => list(&self.energy.eigs),
                    "lj_epsilon" => self.energy.lj_epsilon.to_string(),
                    "lj_sigma" => self.energy.lj_sigma.to_string(),
                    "method" => t.method.name().into(),
                    "finite" => t.flags.finite.to_string(),
                    "project" => t.flags.project.to_string(),
                    "hyperbolize" => t.flags.hyperbolize.to_string(),
                    "isotropize" => t.flags.isotropize.to_string(),
                    "c" => show_opt(&t.c),
                    "gamma" => t.gamma.to_string(),
                    "kappa" => t.kappa.to_string(),
                    "sigma_min" => t.sigma_min.to_string(),
                    "eps" => t.eps.to_string(),
                    "batch_size" => t.batch_size.to_string(),
                    "steps" => t.steps.to_string(),
                    "seed" => t.seed.to_string(),
                    "z_max" => t.z_max.to_string(),
                    "zero_tol" => t.zero_tol.to_string(),
                    "hidden" => list(&t.hidden),
                    "lr" => t.optimizer.lr.to_string(),
                    "weight_decay" => t.optimizer.weight_decay.to_string(),
                    "vz_bias" => t.vz_bias.to_string(),
                    "eval_every" => t.eval_every.to_string(),
                    "eval_rtol" => t.eval_rtol.to_string(),
                    "eval_atol" => t.eval_atol.to_string(),
                    "sample_y0" => t.sample_y0.to_string(),
                    "log_wall_time" => t.log_wall_time.to_string(),
                    _ => unreachable!("every key has a value"),
                };
                (k, v)
            })
            .collect()
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HifmError::Validation(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| HifmError::Validation(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HifmError::Validation(format!("override '{kv}' is not of the form key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Reinterprets generic data as particles when `spatial_dim` is given.
pub fn with_particles(ds: Dataset, spatial_dim: Option<usize>) -> Result<Dataset> {
    match (ds.kind, spatial_dim) {
        (DataKind::Generic, Some(d)) => {
            if d == 0 || ds.dim() % d != 0 {
                return Err(HifmError::Validation(format!(
                    "data dimension {} is not a multiple of spatial_dim {d}",
                    ds.dim()
                )));
            }
            let kind = DataKind::Particles {
                m: ds.dim() / d,
                spatial_dim: d,
            };
            let name = ds.name.clone();
            Dataset::new(ds.samples().to_vec(), ds.dim(), kind, name)
        }
        (DataKind::Particles { spatial_dim: have, .. }, Some(d)) if have != d => Err(HifmError::Validation(format!(
            "data are stored with spatial dimension {have}, not {d}"
        ))),
        _ => Ok(ds),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("method = optimal_transport # baseline\n\nhidden = 32, 16\nc = none\nlr=0.003\n")
            .unwrap();
        assert_eq!(c.train.method, Method::OptimalTransport);
        assert_eq!(c.train.hidden, vec![32, 16]);
        assert_eq!(c.train.c, None);
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.entries().len(), KEYS.len());
    }

    #[test]
    fn bad_input_is_rejected() {
        let mut c = RunConfig::default();
        let e = c.apply_text("steps = 10\nlearning_rate = 1\n").unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("unknown config key"), "{e}");
        assert!(c.apply_text("steps = ten").is_err());
        assert!(c.apply_text("steps").is_err());
        assert!(c.apply_override("finite=maybe").is_err());
        c.apply_override("finite=false").unwrap();
        assert!(!c.train.flags.finite);
    }

    #[test]
    fn energies_check_their_inputs() {
        let spec = EnergySpec::default();
        assert!(spec.build(2, None, None).unwrap().is_some());
        assert!(spec.build(3, None, None).is_err());
        let lj = EnergySpec {
            kind: EnergyKind::LennardJones,
            ..EnergySpec::default()
        };
        assert!(lj.build(6, None, None).is_err());
        assert!(lj.build(6, Some((3, 2)), None).unwrap().is_some());
        let none = EnergySpec {
            kind: EnergyKind::None,
            ..EnergySpec::default()
        };
        assert!(none.build(6, None, None).unwrap().is_none());
    }

    #[test]
    fn particle_reinterpretation() {
        let ds = Dataset::new(vec![0.0; 12], 6, DataKind::Generic, "d").unwrap();
        let p = with_particles(ds.clone(), Some(3)).unwrap();
        assert_eq!(p.kind, DataKind::Particles { m: 2, spatial_dim: 3 });
        assert!(with_particles(ds.clone(), Some(4)).is_err());
        assert_eq!(with_particles(ds.clone(), None).unwrap(), ds);
        assert!(with_particles(p, Some(2)).is_err());
    }
}
