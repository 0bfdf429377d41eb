//! Shared assembly for energies that are sums of functions of squared pair
//! distances, `V(y) = Σ_(i,j) f_ij(‖yᵢ - yⱼ‖²)`.
//!
//! With `r = yᵢ - yⱼ` and `ρ = ‖r‖²`:
//! `∇ᵢ f = 2 f'(ρ) r` and `∂²f/∂yᵢ∂yᵢ = 4 f''(ρ) r rᵀ + 2 f'(ρ) I`,
//! with the `(j, j)` block equal and the off-diagonal blocks negated.

use crate::error::Result;
use crate::linalg::SymMatrix;

/// `f(ρ)`, `f'(ρ)`, `f''(ρ)` for one pair.
pub(crate) type PairEval = (f64, f64, f64);

pub(crate) fn diff(y: &[f64], i: usize, j: usize, d: usize) -> ([f64; 3], f64) {
    let mut r = [0.0; 3];
    let mut rho = 0.0;
    for k in 0..d {
        r[k] = y[i * d + k] - y[j * d + k];
        rho += r[k] * r[k];
    }
    (r, rho)
}

pub(crate) fn value<P>(y: &[f64], d: usize, pairs: P, mut f: impl FnMut(usize, f64) -> Result<PairEval>) -> Result<f64>
where
    P: Iterator<Item = (usize, usize)>,
{
    let mut v = 0.0;
    for (e, (i, j)) in pairs.enumerate() {
        let (_, rho) = diff(y, i, j, d);
        v += f(e, rho)?.0;
    }
    Ok(v)
}

pub(crate) fn gradient<P>(y: &[f64], d: usize, pairs: P, mut f: impl FnMut(usize, f64) -> Result<PairEval>) -> Result<Vec<f64>>
where
    P: Iterator<Item = (usize, usize)>,
{
    let mut g = vec![0.0; y.len()];
    for (e, (i, j)) in pairs.enumerate() {
        let (r, rho) = diff(y, i, j, d);
        let (_, f1, _) = f(e, rho)?;
        for k in 0..d {
            g[i * d + k] += 2.0 * f1 * r[k];
            g[j * d + k] -= 2.0 * f1 * r[k];
        }
    }
    Ok(g)
}

pub(crate) fn hessian<P>(y: &[f64], d: usize, pairs: P, mut f: impl FnMut(usize, f64) -> Result<PairEval>) -> Result<SymMatrix>
where
    P: Iterator<Item = (usize, usize)>,
{
    let n = y.len();
    let mut h = vec![0.0; n * n];
    for (e, (i, j)) in pairs.enumerate() {
        let (r, rho) = diff(y, i, j, d);
        let (_, f1, f2) = f(e, rho)?;
        for a in 0..d {
            for b in 0..d {
                let mut k = 4.0 * f2 * r[a] * r[b];
                if a == b {
                    k += 2.0 * f1;
                }
                h[(i * d + a) * n + i * d + b] += k;
                h[(j * d + a) * n + j * d + b] += k;
                h[(i * d + a) * n + j * d + b] -= k;
                h[(j * d + a) * n + i * d + b] -= k;
            }
        }
    }
    Ok(SymMatrix::symmetrize(n, h))
}
