//! The `hifm` command line.

pub mod check;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{self, DataKind, Dataset, FileFormat, LangevinConfig};
use crate::energy::Energy;
use crate::error::{HifmError, Result};
use crate::likelihood::{self, LearnedField, Prior, Rk45Config};
use crate::model;
use crate::spectrum::{Spectrum, DEFAULT_ZERO_TOL};
use crate::train::{self, Method};
use config::{with_particles, EnergyKind, EnergySpec, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hifm", version, about = "Hessian-informed flow matching")]
pub struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a dataset from an energy with overdamped Langevin dynamics.
    GenData(GenDataArgs),
    /// Write the eigen-spectrum of an energy Hessian at one data sample.
    Hessian(HessianArgs),
    /// Train a flow-matching model from a key=value config.
    Train(TrainArgs),
    /// Per-sample negative log-likelihood under a trained model.
    Nll(NllArgs),
    /// Draw samples from a trained model.
    Sample(SampleArgs),
    /// Run the built-in verification suite.
    Check(CheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EnergyArg {
    Quadratic,
    Lj,
    Formation,
}

impl From<EnergyArg> for EnergyKind {
    fn from(e: EnergyArg) -> Self {
        match e {
            EnergyArg::Quadratic => EnergyKind::Quadratic,
            EnergyArg::Lj => EnergyKind::LennardJones,
            EnergyArg::Formation => EnergyKind::Formation,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct EnergyOpts {
    /// Eigenvalues of the diagonal quadratic energy.
    #[arg(long, value_delimiter = ',', default_value = "1,25")]
    pub eigs: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub lj_epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lj_sigma: f64,
}

impl EnergyOpts {
    fn spec(&self, kind: EnergyArg) -> EnergySpec {
        EnergySpec {
            kind: kind.into(),
            eigs: self.eigs.clone(),
            lj_epsilon: self.lj_epsilon,
            lj_sigma: self.lj_sigma,
        }
    }
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub energy: EnergyArg,
    /// Number of particles (lj, formation).
    #[arg(long, default_value_t = 7)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub spatial_dim: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 100)]
    pub thin: usize,
    #[arg(long, default_value_t = 0)]
    pub refine_steps: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[command(flatten)]
    pub energy_opts: EnergyOpts,
    /// Output file; `.csv` selects CSV, anything else the binary format.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct HessianArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub energy: EnergyArg,
    /// Row of the dataset at which the Hessian is taken.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Target condition number (`none` keeps the raw spectrum).
    #[arg(long, default_value = "2")]
    pub c: String,
    #[arg(long)]
    pub hyperbolize: bool,
    #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
    pub zero_tol: f64,
    /// Treat generic data as particles in this many dimensions.
    #[arg(long)]
    pub spatial_dim: Option<usize>,
    #[command(flatten)]
    pub energy_opts: EnergyOpts,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// key = value config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config entry, e.g. `--set steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory receiving the model, the log and the resolved config.
    #[arg(long, default_value = "run")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct NllArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 1e-2)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub atol: f64,
    /// Treat generic data as particles in this many dimensions.
    #[arg(long)]
    pub spatial_dim: Option<usize>,
    /// Per-sample CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-2)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub atol: f64,
    /// Samples are particles in this many dimensions (zero-CoM prior).
    #[arg(long)]
    pub spatial_dim: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Shift every reference value by a small relative amount; all tight
    /// checks must then fail.
    #[arg(long)]
    pub perturb: bool,
}

fn load_data(path: &Path, spatial_dim: Option<usize>) -> Result<Dataset> {
    with_particles(data::load(path, FileFormat::from_path(path))?, spatial_dim)
}

fn particle_of(ds: &Dataset) -> Option<(usize, usize)> {
    particle_of_kind(ds.kind)
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let spec = a.energy_opts.spec(a.energy);
    let (kind, dim, init) = match a.energy {
        EnergyArg::Quadratic => (DataKind::Generic, a.energy_opts.eigs.len(), None),
        EnergyArg::Lj => {
            let spacing = 2f64.powf(1.0 / 6.0) * a.energy_opts.lj_sigma;
            let init = data::lattice_start(a.m, a.spatial_dim, spacing);
            (DataKind::Particles { m: a.m, spatial_dim: a.spatial_dim }, a.m * a.spatial_dim, Some(init))
        }
        EnergyArg::Formation => {
            let init = data::lattice_start(a.m, a.spatial_dim, 1.0);
            (DataKind::Particles { m: a.m, spatial_dim: a.spatial_dim }, a.m * a.spatial_dim, Some(init))
        }
    };
    let energy = spec
        .build(dim, particle_of_kind(kind), init.as_deref())?
        .ok_or_else(|| HifmError::Validation("an energy is required".into()))?;
    let cfg = LangevinConfig {
        eta: a.eta,
        tau: a.tau,
        burn_in: a.burn_in,
        thin: a.thin,
        n: a.n,
        seed: a.seed,
        refine_steps: a.refine_steps,
        chains: a.chains,
        init,
    };
    let mut ds = data::langevin_generate(&energy, &cfg, kind)?;
    ds.name = energy.kind().into();
    data::store(&ds, &a.out, FileFormat::from_path(&a.out))?;
    let grad: f64 = ds
        .rows()
        .map(|r| energy.gradient(r).map(|g| crate::linalg::norm(&g)))
        .sum::<Result<f64>>()?
        / ds.len().max(1) as f64;
    println!("n={}, dim={}, mean_grad_norm={grad:.6e}", ds.len(), ds.dim());
    Ok(())
}

fn particle_of_kind(kind: DataKind) -> Option<(usize, usize)> {
    match kind {
        DataKind::Particles { m, spatial_dim } => Some((m, spatial_dim)),
        DataKind::Generic => None,
    }
}

fn hessian(a: &HessianArgs) -> Result<()> {
    let ds = load_data(&a.data, a.spatial_dim)?;
    if a.index >= ds.len() {
        return Err(HifmError::Validation(format!(
            "index {} is out of range for {} samples",
            a.index,
            ds.len()
        )));
    }
    let y = ds.row(a.index);
    let energy = a
        .energy_opts
        .spec(a.energy)
        .build(ds.dim(), particle_of(&ds), Some(y))?
        .ok_or_else(|| HifmError::Validation("an energy is required".into()))?;
    let raw = Spectrum::analyze(&energy.hessian(y)?, a.zero_tol)?;
    let mut s = raw.clone();
    if a.c != "none" {
        let c: f64 = a
            .c
            .parse()
            .map_err(|_| HifmError::Validation(format!("bad condition number '{}'", a.c)))?;
        s = s.rescale_condition(c)?;
    }
    if a.hyperbolize {
        s = s.hyperbolize()?;
    }
    let err = |e: csv::Error| HifmError::Format(e.to_string());
    let mut w = csv::Writer::from_path(&a.out).map_err(err)?;
    w.write_record(["index", "alpha_raw", "alpha_processed", "is_null"]).map_err(err)?;
    for i in 0..s.dim() {
        w.write_record([
            i.to_string(),
            format!("{:.16e}", raw.alphas()[i]),
            format!("{:.16e}", s.alphas()[i]),
            s.null_mask()[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    let cond = s.condition_number().map_or("undefined".into(), |c| format!("{c}"));
    println!("null_count={}, condition={cond}", s.null_count());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &a.overrides {
        cfg.apply_override(kv)?;
    }
    cfg.train.validate()?;
    let data_path = cfg
        .data
        .clone()
        .ok_or_else(|| HifmError::Validation("config key 'data' is required".into()))?;
    fs::create_dir_all(&a.out_dir)?;
    fs::write(a.out_dir.join("config.txt"), cfg.to_text())?;
    let ds = load_data(&data_path, cfg.spatial_dim)?;
    let eval = cfg.eval_data.as_ref().map(|p| load_data(p, cfg.spatial_dim)).transpose()?;
    let energy = if cfg.train.method == Method::HessianQuadratic {
        cfg.energy.build(ds.dim(), particle_of(&ds), ds.rows().next())?
    } else {
        None
    };
    let energy_ref = energy.as_ref().map(|e| e as &(dyn Energy + Sync));
    let (m, log) = train::train_loop(&cfg.train, &ds, eval.as_ref(), energy_ref)?;
    model::save(&m, &a.out_dir.join("model.bin"))?;
    log.write_csv(&a.out_dir.join("train_log.csv"))?;
    match (log.rows.last(), log.last_eval()) {
        (Some(r), Some((nll, nfe))) => println!("steps={}, final_loss={:.6e}, eval_nll={nll:.6}, eval_nfe={nfe:.1}", r.step, r.loss),
        (Some(r), None) => println!("steps={}, final_loss={:.6e}", r.step, r.loss),
        _ => println!("steps=0"),
    }
    Ok(())
}

fn nll_cmd(a: &NllArgs) -> Result<()> {
    let m = model::load(&a.model)?;
    let ds = load_data(&a.data, a.spatial_dim)?;
    crate::error::check_dim(m.dim(), ds.dim())?;
    let pd = ds.particle_dim();
    let report = likelihood::nll(
        &LearnedField::new(&m, pd),
        ds.samples(),
        &Rk45Config::with_tol(a.rtol, a.atol),
        &Prior::for_data(ds.dim(), pd),
        1.0,
    )?;
    if let Some(out) = &a.out {
        report.write_csv(out)?;
    }
    println!(
        "mean_nll={:.6}, mean_nfe={:.2}, failures={}",
        report.mean_nll(),
        report.mean_nfe(),
        report.failures()
    );
    Ok(())
}

fn sample_cmd(a: &SampleArgs) -> Result<()> {
    let m = model::load(&a.model)?;
    let dim = m.dim();
    let kind = match a.spatial_dim {
        Some(d) if d > 0 && dim % d == 0 => DataKind::Particles { m: dim / d, spatial_dim: d },
        Some(d) => {
            return Err(HifmError::Validation(format!(
                "model dimension {dim} is not a multiple of spatial_dim {d}"
            )))
        }
        None => DataKind::Generic,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (samples, nfe) = likelihood::sample(
        &LearnedField::new(&m, a.spatial_dim),
        &Prior::for_data(dim, a.spatial_dim),
        &Rk45Config::with_tol(a.rtol, a.atol),
        &mut rng,
        a.n,
        1.0,
    )?;
    let ds = Dataset::new(samples, dim, kind, "samples")?;
    data::store(&ds, &a.out, FileFormat::from_path(&a.out))?;
    println!("n={}, dim={dim}, mean_nfe={nfe:.2}", ds.len());
    Ok(())
}

/// Runs the suite; `Ok(false)` when any check failed.
fn check_cmd(a: &CheckArgs) -> Result<bool> {
    let results = check::run_all(a.perturb);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    Ok(failed == 0)
}

/// Parses `args` and runs the command. Errors print to stderr and give a
/// nonzero exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set thread count: {e}");
            return ExitCode::FAILURE;
        }
    }
    let res = match &cli.command {
        Command::GenData(a) => gen_data(a).map(|_| true),
        Command::Hessian(a) => hessian(a).map(|_| true),
        Command::Train(a) => train_cmd(a).map(|_| true),
        Command::Nll(a) => nll_cmd(a).map(|_| true),
        Command::Sample(a) => sample_cmd(a).map(|_| true),
        Command::Check(a) => check_cmd(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
