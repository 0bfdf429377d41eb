//! Values, gradients and Hessians of the three energies, checked against
//! central differences (relative errors, absolute below unit scale).

use hifm::data::lattice_start;
use hifm::energy::{fd_gradient, fd_hessian, Energy, EnergyModel, FormationParams, LennardJonesParams, QuadraticParams};
use hifm::linalg::{norm, sub};

fn report(name: &str, e: &EnergyModel, y: &[f64]) -> hifm::Result<()> {
    let g = e.gradient(y)?;
    let h = e.hessian(y)?;
    let g_err = norm(&sub(&g, &fd_gradient(e, y, 1e-6)?)) / norm(&g).max(1.0);
    let fd = fd_hessian(e, y, 1e-4)?;
    let h_err = norm(&sub(h.as_slice(), fd.as_slice())) / h.frobenius_norm().max(1.0);
    println!(
        "{name:<10} V={:>10.5}  |grad|={:>9.4}  grad err {g_err:.1e}  hessian err {h_err:.1e}",
        e.value(y)?,
        norm(&g)
    );
    Ok(())
}

fn main() -> hifm::Result<()> {
    let well: EnergyModel = QuadraticParams::diagonal(&[1.0, 25.0])?.into();
    report("quadratic", &well, &[0.3, -0.2])?;

    // a slightly squeezed 13-atom lattice is off the minimum
    let mut y = lattice_start(13, 3, 1.05);
    y[0] += 0.07;
    let lj: EnergyModel = LennardJonesParams::new(13, 3, 1.0, 1.0)?.into();
    report("lj13", &lj, &y)?;

    let reference = lattice_start(13, 3, 1.0);
    let formation: EnergyModel = FormationParams::complete_from_sample(&reference, 13, 3)?.into();
    report("formation", &formation, &y)?;
    report("formation", &formation, &reference)?;
    Ok(())
}
