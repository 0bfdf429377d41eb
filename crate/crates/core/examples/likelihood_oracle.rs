//! Exact-divergence likelihood with a known conditional field as the model,
//! compared with the Gaussian it transports to, at several tolerances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hifm::flow::mean_cov_z;
use hifm::likelihood::{nll_one, ConditionalField, Prior, Rk45Config};
use hifm::linalg::SymMatrix;
use hifm::spectrum::{build_flow_spec, FlowConfig};

fn main() -> hifm::Result<()> {
    let a = SymMatrix::new(3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0])?;
    let fs = build_flow_spec(vec![0.5, -1.0, 2.0], &a, &FlowConfig { gamma: 1e-2, ..FlowConfig::default() })?;
    let end = mean_cov_z(&fs, &[0.0; 3], fs.z_max)?;
    let field = ConditionalField::new(&fs);
    let prior = Prior::StandardNormal { dim: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..3 {
        let y = end.sample(&mut rng);
        let exact = -end.log_density(&y)?;
        print!("exact {exact:>9.4}");
        for tol in [1e-2, 1e-5, 1e-8] {
            let r = nll_one(&field, &y, &Rk45Config::with_tol(tol, tol), &prior, fs.z_max)?;
            print!("   tol {tol:.0e}: {:>9.4} ({} nfe)", r.nll, r.stats.nfe);
        }
        println!();
    }
    Ok(())
}
