//! Overdamped Langevin samples of an anisotropic well, saved as CSV and
//! compared with the Boltzmann covariance τ H⁻¹.

use hifm::data::{self, langevin_generate, DataKind, FileFormat, LangevinConfig};
use hifm::energy::QuadraticParams;

fn main() -> hifm::Result<()> {
    let eigs = [1.0, 25.0];
    let energy = QuadraticParams::diagonal(&eigs)?;
    let cfg = LangevinConfig { tau: 0.5, n: 4000, thin: 200, chains: 4, ..Default::default() };
    let ds = langevin_generate(&energy, &cfg, DataKind::Generic)?;
    for (k, e) in eigs.iter().enumerate() {
        let var = ds.rows().map(|r| r[k] * r[k]).sum::<f64>() / ds.len() as f64;
        println!("axis {k}: sample variance {var:.4}, Boltzmann {:.4}", cfg.tau / e);
    }

    let dir = std::env::temp_dir().join("hifm_langevin_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("well.csv");
    data::store(&ds, &path, FileFormat::Csv)?;
    let back = data::load(&path, FileFormat::Csv)?;
    println!("wrote {} rows to {}, read back equal: {}", back.len(), path.display(), back.samples() == ds.samples());
    Ok(())
}
