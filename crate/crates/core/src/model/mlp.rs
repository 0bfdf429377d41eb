use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_dim, check_finite, HifmError, Result};

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network `(y, z) ↦ (v_y, v_z)` with softplus hidden layers
/// and an identity output head. Parameters are stored flat, layer by layer,
/// each as a row-major `out × in` weight matrix followed by its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    widths: Vec<usize>,
    params: Vec<f64>,
}

impl MlpParams {
    /// Xavier-normal weights `N(0, 2/(fan_in + fan_out))` and zero biases.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        Self::validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::count(widths));
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / (fan_in + fan_out) as f64).sqrt()).expect("positive std");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    /// Widths `[dim + 1, hidden..., dim + 1]`.
    pub fn widths_for(dim: usize, hidden: &[usize]) -> Vec<usize> {
        let mut w = vec![dim + 1];
        w.extend_from_slice(hidden);
        w.push(dim + 1);
        w
    }

    pub fn from_parts(widths: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        Self::validate_widths(&widths)?;
        check_dim(Self::count(&widths), params.len())?;
        check_finite("network parameters", &params)?;
        Ok(Self { widths, params })
    }

    fn validate_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(HifmError::Validation(format!(
                "layer widths need at least an input and an output and no zero entries, got {widths:?}"
            )));
        }
        if widths[0] != widths[widths.len() - 1] || widths[0] < 2 {
            return Err(HifmError::Validation(format!(
                "input and output widths must both be dim + 1 >= 2, got {widths:?}"
            )));
        }
        Ok(())
    }

    fn count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Dimension of the data state `y`.
    pub fn dim(&self) -> usize {
        self.widths[0] - 1
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight and bias slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (off, n_in, n_out) = self.layout(l);
        let (w, rest) = self.params[off..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    fn layout(&self, l: usize) -> (usize, usize, usize) {
        let off = Self::count(&self.widths[..=l]);
        (off, self.widths[l], self.widths[l + 1])
    }

    fn input(&self, y: &[f64], z: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), y.len())?;
        check_finite("network input y", y)?;
        check_finite("network input z", &[z])?;
        let mut x = y.to_vec();
        x.push(z);
        Ok(x)
    }

    fn split(mut out: Vec<f64>) -> (Vec<f64>, f64) {
        let vz = out.pop().expect("output width >= 2");
        (out, vz)
    }

    /// Evaluates the network; the last output coordinate is `v_z`.
    pub fn forward(&self, y: &[f64], z: f64) -> Result<(Vec<f64>, f64)> {
        let x = self.input(y, z)?;
        Ok(Self::split(self.forward_raw(&x)))
    }

    pub(crate) fn forward_raw(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n_layers();
        let mut h = x.to_vec();
        for l in 0..n {
            let (w, b) = self.layer(l);
            let a = b.iter().enumerate().map(|(o, bo)| affine_row(*bo, w, o, &h));
            h = if l + 1 < n { a.map(softplus).collect() } else { a.collect() };
        }
        h
    }

    /// Directional derivative of [`forward`](Self::forward) along `tangent`
    /// (length `dim + 1`, last entry the `z` component).
    pub fn jvp(&self, y: &[f64], z: f64, tangent: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dim(self.dim() + 1, tangent.len())?;
        let x = self.input(y, z)?;
        let (_, mut t) = self.jvp_many(&x, &[tangent.to_vec()]);
        Ok(Self::split(t.pop().expect("one tangent")))
    }

    /// Output and its directional derivatives along several tangents in one
    /// pass over the layers.
    pub(crate) fn jvp_many(&self, x: &[f64], tangents: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n_layers();
        let mut h = x.to_vec();
        let mut dh: Vec<Vec<f64>> = tangents.to_vec();
        for l in 0..n {
            let (w, b) = self.layer(l);
            let a: Vec<f64> = b.iter().enumerate().map(|(o, bo)| affine_row(*bo, w, o, &h)).collect();
            let hidden = l + 1 < n;
            for d in dh.iter_mut() {
                let da = (0..b.len()).map(|o| affine_row(0.0, w, o, d));
                *d = if hidden {
                    da.zip(&a).map(|(v, ao)| v * sigmoid(*ao)).collect()
                } else {
                    da.collect()
                };
            }
            h = if hidden { a.into_iter().map(softplus).collect() } else { a };
        }
        (h, dh)
    }

    /// Runs the network on `x`, asks `cot` for the cotangent of the output and
    /// adds `cotᵀ ∂out/∂θ` into `grad`. Returns the output.
    #[cfg(test)]
    pub(crate) fn forward_vjp(&self, x: Vec<f64>, cot: impl FnOnce(&[f64]) -> Vec<f64>, grad: &mut [f64]) -> Vec<f64> {
        let mut cot = Some(cot);
        let mut out = self.batch_vjp(&[x], |_, o| (cot.take().expect("called once"))(o), grad);
        out.pop().expect("one sample")
    }

    /// [`forward_vjp`](Self::forward_vjp) over a batch. Activations are kept
    /// unit-major (`h[i * b + s]` is unit `i` of sample `s`) so every inner
    /// loop runs along the batch. `cot(s, out)` gives the cotangent of sample
    /// `s`; the pullbacks are summed into `grad`.
    pub(crate) fn batch_vjp(
        &self,
        xs: &[Vec<f64>],
        mut cot: impl FnMut(usize, &[f64]) -> Vec<f64>,
        grad: &mut [f64],
    ) -> Vec<Vec<f64>> {
        let b = xs.len();
        let n = self.n_layers();
        let mut h = vec![0.0; self.widths[0] * b];
        for (s, x) in xs.iter().enumerate() {
            for (i, v) in x.iter().enumerate() {
                h[i * b + s] = *v;
            }
        }
        let mut inputs = Vec::with_capacity(n);
        // softplus' = sigmoid of each hidden pre-activation
        let mut slopes = Vec::with_capacity(n);
        for l in 0..n {
            let (w, bias) = self.layer(l);
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let mut a = vec![0.0; n_out * b];
            for (o, row) in a.chunks_exact_mut(b).enumerate() {
                row.fill(bias[o]);
                for (wi, hi) in w[o * n_in..(o + 1) * n_in].iter().zip(h.chunks_exact(b)) {
                    for (r, v) in row.iter_mut().zip(hi) {
                        *r += wi * v;
                    }
                }
            }
            if l + 1 < n {
                let mut sl = Vec::with_capacity(a.len());
                for v in a.iter_mut() {
                    let e = (-v.abs()).exp();
                    sl.push(if *v >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) });
                    *v = v.max(0.0) + e.ln_1p();
                }
                slopes.push(sl);
            }
            inputs.push(std::mem::replace(&mut h, a));
        }

        let n_last = self.widths[n];
        let mut delta = vec![0.0; n_last * b];
        let mut outs = Vec::with_capacity(b);
        for s in 0..b {
            let o: Vec<f64> = (0..n_last).map(|k| h[k * b + s]).collect();
            for (k, v) in cot(s, &o).into_iter().enumerate() {
                delta[k * b + s] = v;
            }
            outs.push(o);
        }
        for l in (0..n).rev() {
            let (off, n_in, n_out) = self.layout(l);
            let input = &inputs[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (o, d) in delta.chunks_exact(b).enumerate() {
                gb[o] += d.iter().sum::<f64>();
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input.chunks_exact(b)) {
                    *g += lane_dot(d, xi);
                }
            }
            if l > 0 {
                let (w, _) = self.layer(l);
                let mut back = vec![0.0; n_in * b];
                for (o, d) in delta.chunks_exact(b).enumerate() {
                    for (wi, r) in w[o * n_in..(o + 1) * n_in].iter().zip(back.chunks_exact_mut(b)) {
                        for (ri, di) in r.iter_mut().zip(d) {
                            *ri += wi * di;
                        }
                    }
                }
                for (r, sl) in back.iter_mut().zip(&slopes[l - 1]) {
                    *r *= sl;
                }
                delta = back;
            }
        }
        outs
    }
}

/// `start + w[row]·x`, accumulated in input order exactly as
/// [`MlpParams::batch_vjp`] does, so single and batched passes agree bitwise.
fn affine_row(start: f64, w: &[f64], row: usize, x: &[f64]) -> f64 {
    let n = x.len();
    w[row * n..(row + 1) * n].iter().zip(x).fold(start, |acc, (a, b)| acc + a * b)
}

/// Dot product summed in four interleaved lanes so the loop vectorizes. The
/// order is fixed, so results are still reproducible.
fn lane_dot(r: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (rc, xc) = (r.chunks_exact(4), x.chunks_exact(4));
    let tail: f64 = rc.remainder().iter().zip(xc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in rc.zip(xc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_net(seed: u64) -> MlpParams {
        let mut p = MlpParams::init(&[4, 7, 5, 4], seed).unwrap();
        // nonzero biases so the bias paths are exercised
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        for v in p.params_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
        p
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = MlpParams::init(&[3, 8, 3], 7).unwrap();
        assert_eq!(a, MlpParams::init(&[3, 8, 3], 7).unwrap());
        assert_ne!(a, MlpParams::init(&[3, 8, 3], 8).unwrap());
        for l in 0..a.n_layers() {
            assert!(a.layer(l).1.iter().all(|b| *b == 0.0));
        }
        assert_eq!(a.n_params(), 3 * 8 + 8 + 8 * 3 + 3);
    }

    #[test]
    fn invalid_widths_are_rejected() {
        assert!(MlpParams::init(&[3], 0).is_err());
        assert!(MlpParams::init(&[3, 0, 3], 0).is_err());
        assert!(MlpParams::init(&[3, 4, 2], 0).is_err());
    }

    #[test]
    fn zero_weights_output_the_last_bias() {
        let mut p = MlpParams::init(&[3, 4, 3], 0).unwrap();
        let n = p.n_params();
        p.params_mut().iter_mut().for_each(|v| *v = 0.0);
        p.params_mut()[n - 3..].copy_from_slice(&[0.5, -1.0, 2.0]);
        let (vy, vz) = p.forward(&[1.0, 2.0], 0.3).unwrap();
        assert_eq!((vy, vz), (vec![0.5, -1.0], 2.0));
    }

    #[test]
    fn no_hidden_layer_is_affine() {
        let p = MlpParams::init(&[3, 3], 4).unwrap();
        let f = |y: &[f64], z| {
            let (mut v, vz) = p.forward(y, z).unwrap();
            v.push(vz);
            v
        };
        let a = f(&[0.0, 0.0], 0.0);
        let b = f(&[1.0, 2.0], 0.5);
        let c = f(&[2.0, 4.0], 1.0);
        for k in 0..3 {
            assert!((c[k] - 2.0 * b[k] + a[k]).abs() < 1e-14);
        }
        let (j1, _) = p.jvp(&[0.0, 0.0], 0.0, &[1.0, 0.0, 0.0]).unwrap();
        let (j2, _) = p.jvp(&[5.0, -3.0], 0.9, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(j1, j2);
    }

    #[test]
    fn softplus_is_positive_and_stable() {
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-16);
        assert!((sigmoid(-800.0)).abs() < 1e-300 && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = MlpParams::init(&[3, 4, 3], 0).unwrap();
        assert!(matches!(p.forward(&[f64::NAN, 0.0], 0.0), Err(HifmError::Validation(_))));
        assert!(matches!(p.forward(&[0.0, 0.0], f64::INFINITY), Err(HifmError::Validation(_))));
        assert!(matches!(p.forward(&[0.0], 0.0), Err(HifmError::DimensionMismatch { .. })));
    }

    #[test]
    fn jvp_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..10 {
            let p = random_net(seed);
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let z = rng.random_range(0.0..1.0);
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(p.jvp(&y, z, &[0.0; 4]).unwrap(), (vec![0.0; 3], 0.0));
            let (jy, jz) = p.jvp(&y, z, &t).unwrap();
            let h = 1e-5;
            let shift = |s: f64| {
                let yy: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a + s * b).collect();
                p.forward(&yy, z + s * t[3]).unwrap()
            };
            let (pp, pz) = shift(h);
            let (mp, mz) = shift(-h);
            for k in 0..3 {
                let fd = (pp[k] - mp[k]) / (2.0 * h);
                assert!((fd - jy[k]).abs() <= 1e-6 * jy[k].abs().max(1.0), "{fd} vs {}", jy[k]);
            }
            let fd = (pz - mz) / (2.0 * h);
            assert!((fd - jz).abs() <= 1e-6 * jz.abs().max(1.0));
        }
    }

    #[test]
    fn parameter_gradient_matches_central_differences() {
        // squared norm of the output against a fixed target
        let p = random_net(3);
        let x = vec![0.4, -0.7, 1.1, 0.25];
        let target = [0.3, -0.1, 0.9, 1.0];
        let loss = |q: &MlpParams| -> f64 {
            q.forward_raw(&x).iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let mut grad = vec![0.0; p.n_params()];
        p.forward_vjp(
            x.clone(),
            |out| out.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect(),
            &mut grad,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let k = rng.random_range(0..p.n_params());
            let h = 1e-6;
            let mut qp = p.clone();
            let mut qm = p.clone();
            qp.params_mut()[k] += h;
            qm.params_mut()[k] -= h;
            let fd = (loss(&qp) - loss(&qm)) / (2.0 * h);
            assert!((fd - grad[k]).abs() <= 1e-4 * grad[k].abs().max(1e-2), "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn single_linear_layer_gradient_is_least_squares() {
        // out = W x + b, loss = ‖out - t‖²: ∂W = 2 r xᵀ, ∂b = 2 r
        let p = MlpParams::from_parts(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5]).unwrap();
        let x = vec![1.0, -1.0];
        let t = [0.0, 1.0];
        let mut g = vec![0.0; 6];
        let out = p.forward_vjp(x, |o| o.iter().zip(&t).map(|(a, b)| 2.0 * (a - b)).collect(), &mut g);
        assert_eq!(out, vec![-0.5, -1.5]);
        let r = [-0.5, -2.5];
        assert_eq!(g, vec![2.0 * r[0], -2.0 * r[0], 2.0 * r[1], -2.0 * r[1], 2.0 * r[0], 2.0 * r[1]]);
    }
}
