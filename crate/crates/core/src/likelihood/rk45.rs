use crate::error::{HifmError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rk45Config {
    pub rtol: f64,
    pub atol: f64,
    /// First step size; chosen from the initial derivative when `None`.
    pub h0: Option<f64>,
    pub max_steps: usize,
    pub safety: f64,
}

impl Default for Rk45Config {
    fn default() -> Self {
        Self {
            rtol: 1e-2,
            atol: 1e-2,
            h0: None,
            max_steps: 100_000,
            safety: 0.9,
        }
    }
}

impl Rk45Config {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(HifmError::Validation(format!(
                "tolerances must be positive, got rtol={} atol={}",
                self.rtol, self.atol
            )));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) || self.max_steps == 0 {
            return Err(HifmError::Validation(format!("invalid integrator settings {self:?}")));
        }
        Ok(())
    }
}

/// Work done by one integration. `nfe = 1 + 6 (accepted + rejected)`: the
/// first stage of each step reuses the last stage of the previous one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Rk45Stats {
    pub nfe: usize,
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn integration_error(message: String, t: f64, x: &[f64]) -> HifmError {
    HifmError::Integration {
        message,
        t,
        last_state: x.to_vec(),
    }
}

/// Evaluates a stage; errors report the last accepted point `(t_good, x_good)`.
fn eval(
    f: &mut impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    t: f64,
    x: &[f64],
    (t_good, x_good): (f64, &[f64]),
    nfe: &mut usize,
) -> Result<Vec<f64>> {
    *nfe += 1;
    let k = f(t, x)?;
    if k.len() != x.len() {
        return Err(HifmError::DimensionMismatch {
            expected: x.len(),
            got: k.len(),
        });
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(integration_error(format!("non-finite derivative at t = {t}"), t_good, x_good));
    }
    Ok(k)
}

/// Dormand–Prince 5(4) integration of `ẋ = f(t, x)` from `span.0` to
/// `span.1` (either direction). Steps are accepted when the RMS of
/// `errᵢ / (atol + rtol · max(|xᵢ|, |x̃ᵢ|))` is at most 1.
pub fn rk45(
    mut f: impl FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    x0: &[f64],
    span: (f64, f64),
    cfg: &Rk45Config,
) -> Result<(Vec<f64>, Rk45Stats)> {
    cfg.validate()?;
    let (a, b) = span;
    if !(a.is_finite() && b.is_finite()) || a == b {
        return Err(HifmError::Validation(format!("invalid integration span [{a}, {b}]")));
    }
    let n = x0.len();
    let dir = (b - a).signum();
    let len = (b - a).abs();
    let mut stats = Rk45Stats::default();
    let mut t = a;
    let mut x = x0.to_vec();
    let mut k1 = eval(&mut f, t, &x, (t, &x), &mut stats.nfe)?;

    let rms = |v: &[f64], x: &[f64]| -> f64 {
        if n == 0 {
            return 0.0;
        }
        let s: f64 = v
            .iter()
            .zip(x)
            .map(|(vi, xi)| (vi / (cfg.atol + cfg.rtol * xi.abs())).powi(2))
            .sum();
        (s / n as f64).sqrt()
    };
    let mut h = match cfg.h0 {
        Some(h0) if h0 > 0.0 => h0.min(len),
        _ => {
            let d0 = rms(&x, &x);
            let d1 = rms(&k1, &x);
            if d1 < 1e-5 {
                len
            } else {
                (0.01 * d0.max(1.0) / d1).min(len)
            }
        }
    };

    let mut stages: Vec<Vec<f64>> = Vec::with_capacity(7);
    while dir * (b - t) > 0.0 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(integration_error(
                format!("maximum of {} steps reached before the end of the span", cfg.max_steps),
                t,
                &x,
            ));
        }
        let last = (dir * (b - t)) <= h * (1.0 + 1e-12);
        if last {
            h = dir * (b - t);
        }
        if h <= 1e-14 * t.abs().max(len) {
            return Err(integration_error(format!("step size underflow (h = {h:e})"), t, &x));
        }
        let hs = dir * h;
        stages.clear();
        stages.push(k1.clone());
        for s in 0..6 {
            let xs: Vec<f64> = (0..n)
                .map(|i| x[i] + hs * A[s].iter().zip(&stages).map(|(a, k)| a * k[i]).sum::<f64>())
                .collect();
            let ts = if s == 5 { if last { b } else { t + hs } } else { t + C[s] * hs };
            let k = eval(&mut f, ts, &xs, (t, &x), &mut stats.nfe)?;
            stages.push(k);
            if s == 5 {
                // stage 7 is evaluated at the fifth-order solution
                stages.push(xs);
            }
        }
        let x_new = stages.pop().expect("solution kept after stages");
        let err: Vec<f64> = (0..n)
            .map(|i| hs * E.iter().zip(&stages).map(|(e, k)| e * k[i]).sum::<f64>())
            .collect();
        let scale: Vec<f64> = x.iter().zip(&x_new).map(|(a, b)| a.abs().max(b.abs())).collect();
        let en = rms(&err, &scale);
        if en <= 1.0 {
            stats.accepted += 1;
            t = if last { b } else { t + hs };
            x = x_new;
            k1 = stages.pop().expect("seven stages");
            let fac = if en == 0.0 { 10.0 } else { (cfg.safety * en.powf(-0.2)).clamp(0.2, 10.0) };
            h *= fac;
        } else {
            stats.rejected += 1;
            h *= (cfg.safety * en.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok((x, stats))
}
