//! Flow-matching training: per-sample conditional paths, target fields,
//! batching and the optimization loop.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::energy::{zero_com_in_place, Energy, FormationParams};
use crate::error::{HifmError, Result};
use crate::flow::{cond_field_z, isotropic_alpha_data, isotropic_alpha_interp, ot_field, ot_path, sample_path_point_from};
use crate::likelihood::{nll, LearnedField, NllReport, Prior, Rk45Config};
use crate::linalg::SymMatrix;
use crate::model::{loss_and_grad, sample_loss, AdamW, AdamWConfig, LossSample, MlpParams, ModeConfig};
use crate::spectrum::{build_flow_spec, FlowConfig, FlowFlags, FlowSpec, DEFAULT_ZERO_TOL, DEFAULT_Z_MAX};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Hessian of a formation energy built from each sample's own distances.
    HessianFormation,
    /// Hessian of the supplied energy at each sample.
    HessianQuadratic,
    /// `A = αI` with `α = -ln(ε/‖y1‖)`.
    IsotropicData,
    /// `A = αI` with `α = -ln(ε)/κ`.
    IsotropicInterpolant,
    OptimalTransport,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::HessianFormation,
        Method::HessianQuadratic,
        Method::IsotropicData,
        Method::IsotropicInterpolant,
        Method::OptimalTransport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::HessianFormation => "hessian_formation",
            Method::HessianQuadratic => "hessian_quadratic",
            Method::IsotropicData => "isotropic_data",
            Method::IsotropicInterpolant => "isotropic_interpolant",
            Method::OptimalTransport => "optimal_transport",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| HifmError::Validation(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub flags: FlowFlags,
    /// Target condition number; `None` keeps the raw spectrum.
    pub c: Option<f64>,
    pub gamma: f64,
    pub kappa: f64,
    pub sigma_min: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub z_max: f64,
    pub zero_tol: f64,
    pub hidden: Vec<usize>,
    pub optimizer: AdamWConfig,
    /// Initial value of the `v_z` output, which starts out constant.
    pub vz_bias: f64,
    /// Evaluate NLL every this many steps (0: only after the last step).
    pub eval_every: usize,
    pub eval_rtol: f64,
    pub eval_atol: f64,
    /// Draw a fresh prior `y0` for the path mean instead of using `0`.
    pub sample_y0: bool,
    /// Record wall-clock time in the log (makes logs run-dependent).
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::HessianQuadratic,
            flags: FlowFlags {
                finite: true,
                ..FlowFlags::default()
            },
            c: Some(2.0),
            gamma: 1e-10,
            kappa: 1.0,
            sigma_min: 1e-5,
            eps: 1e-5,
            batch_size: 256,
            steps: 1000,
            seed: 0,
            z_max: DEFAULT_Z_MAX,
            zero_tol: DEFAULT_ZERO_TOL,
            hidden: vec![64, 64],
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            vz_bias: 1.0,
            eval_every: 0,
            eval_rtol: 1e-2,
            eval_atol: 1e-2,
            sample_y0: false,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HifmError::Validation(m));
        if let Some(c) = self.c {
            if !(c >= 1.0) {
                return bad(format!("condition number must be >= 1, got {c}"));
            }
        }
        if !(self.gamma > 0.0) || !(self.kappa > 0.0) {
            return bad(format!("gamma and kappa must be positive, got {} and {}", self.gamma, self.kappa));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < 1.0) {
            return bad(format!("sigma_min must lie in (0, 1), got {}", self.sigma_min));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.z_max > 0.0 && self.z_max < 1.0) {
            return bad(format!("z_max must lie in (0, 1), got {}", self.z_max));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden widths must be non-empty and positive, got {:?}", self.hidden));
        }
        Ok(())
    }

    pub fn flow_config(&self, particle_dim: Option<usize>) -> FlowConfig {
        FlowConfig {
            c: self.c,
            gamma: self.gamma,
            kappa: self.kappa,
            sigma0: if self.sample_y0 { self.gamma } else { 1.0 },
            zero_tol: self.zero_tol,
            z_max: self.z_max,
            flags: self.flags,
            particle_dim,
        }
    }

    fn mode(&self, particle_dim: Option<usize>) -> ModeConfig {
        ModeConfig {
            finite: self.flags.finite,
            particle_dim,
        }
    }
}

/// The conditional path attached to one data sample.
#[derive(Clone, Debug)]
pub enum SampleFlow {
    Linear {
        spec: Box<FlowSpec>,
        /// Hyperbolic projector when the `project` flag is on.
        projector: Option<SymMatrix>,
    },
    Ot {
        y1: Vec<f64>,
        particle_dim: Option<usize>,
    },
}

impl SampleFlow {
    pub fn y1(&self) -> &[f64] {
        match self {
            SampleFlow::Linear { spec, .. } => &spec.y1,
            SampleFlow::Ot { y1, .. } => y1,
        }
    }

    pub fn spec(&self) -> Option<&FlowSpec> {
        match self {
            SampleFlow::Linear { spec, .. } => Some(spec),
            SampleFlow::Ot { .. } => None,
        }
    }

    fn particle_dim(&self) -> Option<usize> {
        match self {
            SampleFlow::Linear { spec, .. } => spec.particle_dim,
            SampleFlow::Ot { particle_dim, .. } => *particle_dim,
        }
    }

    fn projector(&self) -> Option<&SymMatrix> {
        match self {
            SampleFlow::Linear { projector, .. } => projector.as_ref(),
            SampleFlow::Ot { .. } => None,
        }
    }

    fn summary(&self) -> String {
        match self {
            SampleFlow::Linear { spec, .. } => format!(
                "alpha in [{:e}, {:e}], {} null directions",
                spec.alpha_min(),
                spec.spectrum.alpha_max(),
                spec.spectrum.null_count()
            ),
            SampleFlow::Ot { .. } => "optimal-transport path".into(),
        }
    }
}

/// Conditional path for one data point. `energy` supplies the Hessian for
/// [`Method::HessianQuadratic`]; formation energies are built from `y1`.
pub fn make_flow_spec_for_sample(
    cfg: &TrainConfig,
    y1: &[f64],
    energy: Option<&(dyn Energy + Sync)>,
    particle: Option<(usize, usize)>,
) -> Result<SampleFlow> {
    let particle_dim = particle.map(|(_, d)| d);
    let fc = cfg.flow_config(particle_dim);
    let spec = match cfg.method {
        Method::OptimalTransport => {
            return Ok(SampleFlow::Ot {
                y1: y1.to_vec(),
                particle_dim,
            })
        }
        Method::HessianFormation => {
            let (m, d) = particle.ok_or_else(|| {
                HifmError::Validation("formation flows need particle data".into())
            })?;
            let e = FormationParams::complete_from_sample(y1, m, d)?;
            build_flow_spec(y1.to_vec(), &e.hessian(y1)?, &fc)?
        }
        Method::HessianQuadratic => {
            let e = energy.ok_or_else(|| HifmError::Validation("hessian flows need an energy".into()))?;
            build_flow_spec(y1.to_vec(), &e.hessian(y1)?, &fc)?
        }
        Method::IsotropicData => FlowSpec::isotropic(y1.to_vec(), isotropic_alpha_data(y1, cfg.eps)?, &fc)?,
        Method::IsotropicInterpolant => {
            FlowSpec::isotropic(y1.to_vec(), isotropic_alpha_interp(cfg.eps, cfg.kappa)?, &fc)?
        }
    };
    let projector = cfg.flags.project.then(|| spec.spectrum.hyperbolic_projector());
    Ok(SampleFlow::Linear {
        spec: Box::new(spec),
        projector,
    })
}

/// Builds the flow of every row (in parallel; the result is order-preserving).
pub fn build_flows(cfg: &TrainConfig, data: &Dataset, energy: Option<&(dyn Energy + Sync)>) -> Result<Vec<SampleFlow>> {
    let particle = match data.kind {
        crate::data::DataKind::Particles { m, spatial_dim } => Some((m, spatial_dim)),
        crate::data::DataKind::Generic => None,
    };
    (0..data.len())
        .into_par_iter()
        .map(|i| {
            make_flow_spec_for_sample(cfg, data.row(i), energy, particle)
                .map_err(|e| HifmError::Validation(format!("sample {i}: {e}")))
        })
        .collect()
}

/// Draws `z ~ U[0, z_max]`, a path point and its raw target for every flow.
pub fn draw_samples<'a>(cfg: &TrainConfig, flows: &[&'a SampleFlow], rng: &mut impl Rng) -> Result<Vec<LossSample<'a>>> {
    flows
        .iter()
        .map(|f| {
            let z = rng.random_range(0.0..cfg.z_max);
            let (y, vy, vz) = match f {
                SampleFlow::Linear { spec, .. } => {
                    let mut y0 = vec![0.0; spec.dim()];
                    if cfg.sample_y0 {
                        y0.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                        if let Some(d) = spec.particle_dim {
                            zero_com_in_place(&mut y0, d);
                        }
                    }
                    let p = sample_path_point_from(spec, &y0, z, rng)?;
                    let (vy, vz) = cond_field_z(spec, &p.y, z, &y0)?;
                    (p.y, vy, vz)
                }
                SampleFlow::Ot { y1, particle_dim } => {
                    let mut y = ot_path(y1, z, cfg.sigma_min)?.sample(rng);
                    if let Some(d) = particle_dim {
                        zero_com_in_place(&mut y, *d);
                    }
                    let vy = ot_field(&y, z, y1, cfg.sigma_min)?;
                    (y, vy, 1.0)
                }
            };
            Ok(LossSample {
                y,
                z,
                target_vy: vy,
                target_vz: vz,
                projector: f.projector(),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    pub loss: f64,
    pub clamp_count: usize,
}

/// One optimization step on the given flows.
pub fn training_step(
    model: &mut MlpParams,
    opt: &mut AdamW,
    cfg: &TrainConfig,
    batch: &[&SampleFlow],
    rng: &mut impl Rng,
) -> Result<StepOutput> {
    let Some(first) = batch.first() else {
        return Err(HifmError::Validation("empty batch".into()));
    };
    let mode = cfg.mode(first.particle_dim());
    let samples = draw_samples(cfg, batch, rng)?;
    let out = loss_and_grad(model, &samples, None, &mode)?;
    if !out.loss.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
        return Err(diagnose(model, batch, &samples, &mode, out.loss));
    }
    opt.update(model.params_mut(), &out.grad)?;
    Ok(StepOutput {
        loss: out.loss,
        clamp_count: out.clamp_count,
    })
}

fn diagnose(model: &MlpParams, batch: &[&SampleFlow], samples: &[LossSample], mode: &ModeConfig, loss: f64) -> HifmError {
    for (k, (s, f)) in samples.iter().zip(batch).enumerate() {
        let bad_target = s.target_vy.iter().any(|v| !v.is_finite()) || !s.target_vz.is_finite();
        let l = model.forward(&s.y, s.z).map(|(vy, vz)| sample_loss(&vy, vz, s, mode).0);
        if bad_target || !matches!(l, Ok(v) if v.is_finite()) {
            return HifmError::Numerical(format!(
                "non-finite loss ({loss}) from batch entry {k} at z = {}: {}{}",
                s.z,
                f.summary(),
                if bad_target { ", target is non-finite" } else { "" }
            ));
        }
    }
    HifmError::Numerical(format!("non-finite loss or gradient ({loss}) with finite per-sample losses"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub loss: f64,
    pub eval_nll: Option<f64>,
    pub eval_nfe: Option<f64>,
    pub wall_ms: u64,
    pub clamp_count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn push(&mut self, row: LogRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(HifmError::Validation(format!(
                    "log steps must increase ({} after {})",
                    row.step, last.step
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Mean loss over rows with `lo <= step < hi`.
    pub fn mean_loss(&self, lo: usize, hi: usize) -> f64 {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.step >= lo && r.step < hi).map(|r| r.loss).collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn last_eval(&self) -> Option<(f64, f64)> {
        self.rows.iter().rev().find_map(|r| Some((r.eval_nll?, r.eval_nfe?)))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: csv::Error| HifmError::Format(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["step", "loss", "eval_nll", "eval_nfe", "wall_ms", "clamp_count"])
            .map_err(err)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.10e}"));
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:.10e}", r.loss),
                opt(r.eval_nll),
                opt(r.eval_nfe),
                r.wall_ms.to_string(),
                r.clamp_count.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Initial network for `dim`-dimensional data.
pub fn init_model(cfg: &TrainConfig, dim: usize) -> Result<MlpParams> {
    let widths = MlpParams::widths_for(dim, &cfg.hidden);
    let mut model = MlpParams::init(&widths, cfg.seed)?;
    // The v_z head starts as the constant `vz_bias`: its weight row is the last
    // one of the output matrix and its bias the last parameter.
    let fan_in = widths[widths.len() - 2];
    let n = model.n_params();
    let head = &mut model.params_mut()[n - (dim + 1) - fan_in..];
    head[..fan_in].fill(0.0);
    head[head.len() - 1] = cfg.vz_bias;
    Ok(model)
}

/// NLL of every evaluation row under the learned field, integrated over `z ∈ [1, 0]`.
pub fn evaluate(model: &MlpParams, eval_set: &Dataset, rtol: f64, atol: f64) -> Result<NllReport> {
    let pd = eval_set.particle_dim();
    let field = LearnedField::new(model, pd);
    let prior = Prior::for_data(eval_set.dim(), pd);
    nll(&field, eval_set.samples(), &Rk45Config::with_tol(rtol, atol), &prior, 1.0)
}

/// Runs `cfg.steps` steps on `data`, evaluating on `eval_set` every
/// `eval_every` steps and after the last step.
pub fn train_loop(
    cfg: &TrainConfig,
    data: &Dataset,
    eval_set: Option<&Dataset>,
    energy: Option<&(dyn Energy + Sync)>,
) -> Result<(MlpParams, TrainLog)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(HifmError::Validation("training data are empty".into()));
    }
    if let Some(e) = eval_set {
        crate::error::check_dim(data.dim(), e.dim())?;
    }
    let mut model = init_model(cfg, data.dim())?;
    let mut log = TrainLog::default();
    if cfg.steps == 0 {
        return Ok((model, log));
    }
    let flows = build_flows(cfg, data, energy)?;
    let mut opt = AdamW::new(model.n_params(), cfg.optimizer)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5E_ED0F_F10E);
    let start = Instant::now();
    for step in 1..=cfg.steps {
        let batch: Vec<&SampleFlow> = (0..cfg.batch_size)
            .map(|_| &flows[rng.random_range(0..flows.len())])
            .collect();
        let out = training_step(&mut model, &mut opt, cfg, &batch, &mut rng)
            .map_err(|e| HifmError::Numerical(format!("step {step}: {e}")))?;
        let due = step == cfg.steps || (cfg.eval_every > 0 && step % cfg.eval_every == 0);
        let (eval_nll, eval_nfe) = match eval_set {
            Some(es) if due && !es.is_empty() => {
                let r = evaluate(&model, es, cfg.eval_rtol, cfg.eval_atol)?;
                (Some(r.mean_nll()), Some(r.mean_nfe()))
            }
            _ => (None, None),
        };
        log.push(LogRow {
            step,
            loss: out.loss,
            eval_nll,
            eval_nfe,
            wall_ms: if cfg.log_wall_time { start.elapsed().as_millis() as u64 } else { 0 },
            clamp_count: out.clamp_count,
        })?;
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataKind;
    use crate::energy::QuadraticParams;
    use rand::{Rng, SeedableRng};

    fn quad() -> QuadraticParams {
        QuadraticParams::diagonal(&[1.0, 25.0]).unwrap()
    }

    fn gauss_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s: Vec<f64> = (0..n).flat_map(|_| [rng.sample::<f64, _>(StandardNormal), 0.2 * rng.sample::<f64, _>(StandardNormal)]).collect();
        Dataset::new(s, 2, DataKind::Generic, "g").unwrap()
    }

    fn cloud(m: usize, d: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mut y: Vec<f64> = (0..m * d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        zero_com_in_place(&mut y, d);
        y
    }

    #[test]
    fn isotropic_data_rate() {
        let cfg = TrainConfig {
            method: Method::IsotropicData,
            eps: (-5f64).exp(),
            ..TrainConfig::default()
        };
        let f = make_flow_spec_for_sample(&cfg, &[0.6, 0.8], None, None).unwrap();
        for a in f.spec().unwrap().alphas() {
            assert!((a - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn formation_flows_on_thirteen_agents() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y1 = cloud(13, 3, &mut rng);
        let mut cfg = TrainConfig {
            method: Method::HessianFormation,
            ..TrainConfig::default()
        };
        cfg.flags.hyperbolize = true;
        let f = make_flow_spec_for_sample(&cfg, &y1, None, Some((13, 3))).unwrap();
        let s = &f.spec().unwrap().spectrum;
        assert_eq!(s.dim(), 39);
        assert_eq!(s.null_count(), 6);
        assert!(s.alphas().iter().all(|&a| a > 0.0));
        assert!(make_flow_spec_for_sample(&cfg, &y1, None, None).is_err());
    }

    #[test]
    fn ot_targets_are_the_ot_field() {
        let cfg = TrainConfig {
            method: Method::OptimalTransport,
            kappa: 7.0,
            c: Some(9.0),
            ..TrainConfig::default()
        };
        let f = make_flow_spec_for_sample(&cfg, &[1.0, -2.0], None, None).unwrap();
        assert!(f.spec().is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in draw_samples(&cfg, &[&f; 20], &mut rng).unwrap() {
            let v = ot_field(&s.y, s.z, &[1.0, -2.0], cfg.sigma_min).unwrap();
            assert_eq!(s.target_vy, v);
            assert_eq!(s.target_vz, 1.0);
        }
    }

    #[test]
    fn projected_loss_ignores_null_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y1 = cloud(5, 2, &mut rng);
        let mut cfg = TrainConfig {
            method: Method::HessianFormation,
            ..TrainConfig::default()
        };
        cfg.flags.project = true;
        cfg.flags.hyperbolize = true;
        let f = make_flow_spec_for_sample(&cfg, &y1, None, Some((5, 2))).unwrap();
        let null = f.spec().unwrap().spectrum.null_projector();
        let model = init_model(&cfg, 10).unwrap();
        let mode = cfg.mode(Some(2));
        for s in draw_samples(&cfg, &[&f; 20], &mut rng).unwrap() {
            let (vy, vz) = model.forward(&s.y, s.z).unwrap();
            let w: Vec<f64> = (0..10).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let shifted: Vec<f64> = vy.iter().zip(null.matvec(&w)).map(|(a, b)| a + b).collect();
            let (a, _) = sample_loss(&vy, vz, &s, &mode);
            let (b, _) = sample_loss(&shifted, vz, &s, &mode);
            assert!((a - b).abs() < 1e-12 * a.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn initial_vz_is_constant() {
        let cfg = TrainConfig {
            vz_bias: 1.5,
            hidden: vec![9, 7],
            ..TrainConfig::default()
        };
        let model = init_model(&cfg, 3).unwrap();
        for (y, z) in [([0.0, 1.0, -2.0], 0.1), ([3.0, -1.0, 0.5], 0.9)] {
            let (vy, vz) = model.forward(&y, z).unwrap();
            assert_eq!(vz, 1.5);
            assert!(vy.iter().any(|v| *v != 0.0));
        }
    }

    #[test]
    fn particle_path_points_have_zero_com() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y1 = cloud(4, 3, &mut rng);
        for method in [Method::HessianFormation, Method::OptimalTransport, Method::IsotropicInterpolant] {
            let cfg = TrainConfig {
                method,
                sample_y0: true,
                ..TrainConfig::default()
            };
            let f = make_flow_spec_for_sample(&cfg, &y1, None, Some((4, 3))).unwrap();
            for s in draw_samples(&cfg, &[&f; 10], &mut rng).unwrap() {
                for k in 0..3 {
                    let c: f64 = s.y.iter().skip(k).step_by(3).sum();
                    assert!(c.abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn steps_are_deterministic() {
        let cfg = TrainConfig::default();
        let e = quad();
        let f = make_flow_spec_for_sample(&cfg, &[0.3, 0.1], Some(&e), None).unwrap();
        let batch = vec![&f; 32];
        let run = || {
            let mut model = init_model(&cfg, 2).unwrap();
            let mut opt = AdamW::new(model.n_params(), cfg.optimizer).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let out = training_step(&mut model, &mut opt, &cfg, &batch, &mut rng).unwrap();
            (out, model)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_steps_return_the_initial_model() {
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        let (model, log) = train_loop(&cfg, &gauss_data(10, 0), None, Some(&quad())).unwrap();
        assert_eq!(model, init_model(&cfg, 2).unwrap());
        assert!(log.rows.is_empty());
    }

    #[test]
    fn short_runs_reproduce_and_learn() {
        let cfg = TrainConfig {
            steps: 300,
            batch_size: 64,
            eval_every: 150,
            hidden: vec![32, 32],
            ..TrainConfig::default()
        };
        let data = gauss_data(200, 1);
        let eval = gauss_data(20, 2);
        let (m1, l1) = train_loop(&cfg, &data, Some(&eval), Some(&quad())).unwrap();
        let (m2, l2) = train_loop(&cfg, &data, Some(&eval), Some(&quad())).unwrap();
        assert_eq!((m1, &l1), (m2, &l2));
        assert_eq!(l1.rows.len(), 300);
        assert!(l1.rows[149].eval_nll.is_some() && l1.rows[150].eval_nll.is_none());
        assert!(l1.mean_loss(250, 301) < l1.mean_loss(1, 51));
        let (nll, nfe) = l1.last_eval().unwrap();
        assert!(nll.is_finite() && nfe >= 7.0);
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let data = gauss_data(4, 0);
        for cfg in [
            TrainConfig { c: Some(0.5), ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { gamma: 0.0, ..TrainConfig::default() },
        ] {
            assert!(train_loop(&cfg, &data, None, Some(&quad())).is_err());
        }
        let cfg = TrainConfig::default();
        assert!(train_loop(&cfg, &data, None, None).is_err());
        assert_eq!(Method::parse("optimal_transport").unwrap(), Method::OptimalTransport);
        assert!(Method::parse("ot").is_err());
    }
}
