//! Datasets: binary and CSV formats, Langevin sampling of Boltzmann data,
//! splits and particle preprocessing.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::energy::{zero_com_in_place, Energy};
use crate::error::{check_finite, HifmError, Result};
use crate::model::io::Reader;

pub const DATA_MAGIC: &[u8; 8] = b"HIFMDATA";
pub const DATA_VERSION: u32 = 1;
/// Chains whose state norm exceeds this are considered divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    Generic,
    /// `m` particles in `spatial_dim` dimensions, flattened particle-major.
    Particles { m: usize, spatial_dim: usize },
}

/// `n × dim` samples stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<f64>,
    dim: usize,
    pub kind: DataKind,
    pub name: String,
}

impl Dataset {
    pub fn new(samples: Vec<f64>, dim: usize, kind: DataKind, name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(HifmError::Validation("dataset dimension must be positive".into()));
        }
        if samples.len() % dim != 0 {
            return Err(HifmError::Validation(format!(
                "{} values do not form rows of length {dim}",
                samples.len()
            )));
        }
        if let DataKind::Particles { m, spatial_dim } = kind {
            if m * spatial_dim != dim || spatial_dim == 0 {
                return Err(HifmError::Validation(format!(
                    "particle data with m = {m}, spatial_dim = {spatial_dim} needs dim {}, got {dim}",
                    m * spatial_dim
                )));
            }
        }
        check_finite("dataset", &samples)?;
        Ok(Self {
            samples,
            dim,
            kind,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.samples[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.dim)
    }

    pub fn particle_dim(&self) -> Option<usize> {
        match self.kind {
            DataKind::Particles { spatial_dim, .. } => Some(spatial_dim),
            DataKind::Generic => None,
        }
    }

    /// New dataset made of the listed rows, in order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        let samples = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Dataset {
            samples,
            dim: self.dim,
            kind: self.kind,
            name: self.name.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileFormat {
    Csv,
    Binary,
}

impl FileFormat {
    /// `.csv` selects CSV, anything else the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

pub fn to_bytes(ds: &Dataset) -> Vec<u8> {
    let (kind, m, sd) = match ds.kind {
        DataKind::Generic => (0u8, 0u32, 0u32),
        DataKind::Particles { m, spatial_dim } => (1, m as u32, spatial_dim as u32),
    };
    let mut out = Vec::with_capacity(37 + 8 * ds.samples.len());
    out.extend_from_slice(DATA_MAGIC);
    out.extend_from_slice(&DATA_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.dim as u64).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&m.to_le_bytes());
    out.extend_from_slice(&sd.to_le_bytes());
    for v in &ds.samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], name: &str) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != DATA_MAGIC {
        return Err(HifmError::Format("not a dataset file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != DATA_VERSION {
        return Err(HifmError::Format(format!(
            "dataset version {version} is not supported (expected {DATA_VERSION})"
        )));
    }
    let n = r.u64()? as usize;
    let dim = r.u64()? as usize;
    let kind = match (r.u8()?, r.u32()? as usize, r.u32()? as usize) {
        (0, _, _) => DataKind::Generic,
        (1, m, spatial_dim) => DataKind::Particles { m, spatial_dim },
        (k, _, _) => return Err(HifmError::Format(format!("unknown dataset kind {k}"))),
    };
    let count = n.checked_mul(dim).filter(|c| c.checked_mul(8) == Some(r.remaining()));
    let Some(count) = count else {
        return Err(HifmError::Format(format!(
            "header promises {n} x {dim} values but {} bytes follow",
            r.remaining()
        )));
    };
    let samples = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, dim, kind, name).map_err(|e| HifmError::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> HifmError {
    HifmError::Format(e.to_string())
}

pub fn write_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record((0..ds.dim).map(|k| format!("x{k}"))).map_err(csv_err)?;
    for row in ds.rows() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}"))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV with a header row; the result is generic data.
pub fn read_csv(path: &Path) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(csv_err)?;
    let dim = r.headers().map_err(csv_err)?.len();
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != dim {
            return Err(HifmError::Format(format!(
                "line {line}: expected {dim} fields, found {}",
                rec.len()
            )));
        }
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                HifmError::Format(format!("row {i} (line {line}), column {c}: cannot parse {cell:?} as a number"))
            })?;
            samples.push(v);
        }
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
    Dataset::new(samples, dim.max(1), DataKind::Generic, name).map_err(|e| HifmError::Format(e.to_string()))
}

pub fn store(ds: &Dataset, path: &Path, format: FileFormat) -> Result<()> {
    match format {
        FileFormat::Csv => write_csv(ds, path),
        FileFormat::Binary => Ok(fs::write(path, to_bytes(ds))?),
    }
}

pub fn load(path: &Path, format: FileFormat) -> Result<Dataset> {
    match format {
        FileFormat::Csv => read_csv(path),
        FileFormat::Binary => {
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("data");
            from_bytes(&fs::read(path)?, name)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LangevinConfig {
    /// Step size η.
    pub eta: f64,
    /// Temperature τ; zero gives plain gradient descent.
    pub tau: f64,
    pub burn_in: usize,
    /// Steps between recorded samples.
    pub thin: usize,
    pub n: usize,
    pub seed: u64,
    /// Gradient-descent steps applied to each recorded sample.
    pub refine_steps: usize,
    /// Independent chains sharing the `n` samples.
    pub chains: usize,
    /// Starting state; a standard normal draw when `None`.
    pub init: Option<Vec<f64>>,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            eta: 1e-3,
            tau: 1.0,
            burn_in: 1000,
            thin: 100,
            n: 1000,
            seed: 0,
            refine_steps: 0,
            chains: 1,
            init: None,
        }
    }
}

fn langevin_step(
    energy: &(impl Energy + ?Sized),
    y: &mut [f64],
    eta: f64,
    noise: f64,
    particle_dim: Option<usize>,
    rng: &mut impl Rng,
) -> Result<()> {
    let g = energy.gradient(y)?;
    for (yi, gi) in y.iter_mut().zip(&g) {
        let e: f64 = if noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        *yi += -eta * gi + noise * e;
    }
    if let Some(d) = particle_dim {
        zero_com_in_place(y, d);
    }
    let nrm = crate::linalg::norm(y);
    if !(nrm <= DIVERGENCE_NORM) {
        return Err(HifmError::Numerical(format!(
            "Langevin chain diverged (|y| = {nrm:e}); try a smaller step size than eta = {eta}"
        )));
    }
    Ok(())
}

/// Overdamped Langevin `y ← y - η∇V + √(2ητ) ε` with burn-in and thinning.
pub fn langevin_generate(energy: &(impl Energy + Sync + ?Sized), cfg: &LangevinConfig, kind: DataKind) -> Result<Dataset> {
    if !(cfg.eta > 0.0 && cfg.tau >= 0.0) || cfg.thin == 0 || cfg.chains == 0 {
        return Err(HifmError::Validation(format!(
            "Langevin needs eta > 0, tau >= 0, thin >= 1 and chains >= 1, got {cfg:?}"
        )));
    }
    let dim = energy.dim();
    if let Some(init) = &cfg.init {
        crate::error::check_dim(dim, init.len())?;
    }
    let particle_dim = match kind {
        DataKind::Particles { spatial_dim, .. } => Some(spatial_dim),
        DataKind::Generic => None,
    };
    let noise = (2.0 * cfg.eta * cfg.tau).sqrt();
    let per_chain: Vec<usize> = (0..cfg.chains)
        .map(|c| cfg.n / cfg.chains + usize::from(c < cfg.n % cfg.chains))
        .collect();
    let chains: Vec<Vec<f64>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(c, &count)| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add((c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let mut y = match &cfg.init {
                Some(v) => v.clone(),
                None => (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
            };
            if let Some(d) = particle_dim {
                zero_com_in_place(&mut y, d);
            }
            for _ in 0..cfg.burn_in {
                langevin_step(energy, &mut y, cfg.eta, noise, particle_dim, &mut rng)?;
            }
            let mut out = Vec::with_capacity(count * dim);
            for _ in 0..count {
                for _ in 0..cfg.thin {
                    langevin_step(energy, &mut y, cfg.eta, noise, particle_dim, &mut rng)?;
                }
                let mut s = y.clone();
                for _ in 0..cfg.refine_steps {
                    langevin_step(energy, &mut s, cfg.eta, 0.0, particle_dim, &mut rng)?;
                }
                out.extend(s);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Dataset::new(chains.concat(), dim, kind, "langevin")
}

/// `m` points on a cubic grid with the given spacing, centered at the origin.
pub fn lattice_start(m: usize, spatial_dim: usize, spacing: f64) -> Vec<f64> {
    let side = (1..).find(|k: &usize| k.pow(spatial_dim as u32) >= m).unwrap_or(1);
    let mut y = Vec::with_capacity(m * spatial_dim);
    for i in 0..m {
        let mut r = i;
        for _ in 0..spatial_dim {
            y.push(spacing * (r % side) as f64);
            r /= side;
        }
    }
    zero_com_in_place(&mut y, spatial_dim.max(1));
    y
}

/// Seeded random split into `(train, test)` with `⌊frac · n⌋` training rows.
pub fn split(ds: &Dataset, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(HifmError::Validation(format!("train fraction must lie in (0, 1), got {train_frac}")));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = (train_frac * ds.len() as f64).floor() as usize;
    Ok((ds.select(&idx[..k]), ds.select(&idx[k..])))
}

/// Moves every particle sample to zero center of mass.
pub fn preprocess_particles(ds: &Dataset) -> Result<Dataset> {
    let Some(d) = ds.particle_dim() else {
        return Err(HifmError::Validation(format!(
            "dataset '{}' is not particle data",
            ds.name
        )));
    };
    let mut out = ds.clone();
    for row in out.samples.chunks_mut(ds.dim) {
        zero_com_in_place(row, d);
    }
    Ok(out)
}
