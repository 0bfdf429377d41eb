//! Hessian spectrum of a formation energy at a satisfied formation, and the
//! processing steps that turn it into per-direction decay rates.

use hifm::data::lattice_start;
use hifm::energy::{Energy, FormationParams};
use hifm::spectrum::Spectrum;

fn show(label: &str, s: &Spectrum) {
    let alphas: Vec<String> = s.alphas().iter().map(|a| format!("{a:.3}")).collect();
    println!("{label:<12} nulls={} cond={:?}", s.null_count(), s.condition_number());
    println!("             [{}]", alphas.join(", "));
}

fn main() -> hifm::Result<()> {
    let (m, d) = (7, 3);
    let y = lattice_start(m, d, 1.0);
    let energy = FormationParams::complete_from_sample(&y, m, d)?;
    let raw = Spectrum::analyze(&energy.hessian(&y)?, 1e-8)?;
    show("raw", &raw);

    let scaled = raw.clone().rescale_condition(2.0)?;
    show("c = 2", &scaled);

    let hyp = scaled.clone().hyperbolize()?;
    show("hyperbolize", &hyp);

    // diffusion that gives every hyperbolic direction stationary variance γ
    let beta = scaled.diffusion_coeffs(1e-2, true)?;
    println!("beta (isotropized, gamma = 1e-2): {:.4?}", &beta[..]);
    Ok(())
}
