//! Closed-form moments of a linear SDE toward one data point, followed in
//! time and through the interpolant state.

use hifm::flow::{interpolant_mean, mean_cov_time, mean_cov_z, time_of};
use hifm::linalg::SymMatrix;
use hifm::spectrum::{build_flow_spec, FlowConfig};

fn main() -> hifm::Result<()> {
    let a = SymMatrix::new(2, vec![3.0, 1.0, 1.0, 2.0])?;
    let cfg = FlowConfig { gamma: 1e-2, c: None, ..FlowConfig::default() };
    let fs = build_flow_spec(vec![1.0, -0.5], &a, &cfg)?;
    println!("alphas {:.4?}, beta {:.4?}", fs.alphas(), fs.beta);

    let y0 = [0.0, 0.0];
    println!("{:>6} {:>8} {:>20} {:>22}", "t", "z", "mean", "variance");
    for t in [0.0, 0.25, 0.5, 1.0, 2.0, 4.0] {
        let g = mean_cov_time(&fs, &y0, t)?;
        let z = interpolant_mean(&fs, t);
        println!("{t:>6.2} {z:>8.5} {:>20} {:>22}", format!("{:.4?}", g.mean), g.var.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" "));
        // the same state addressed by z
        let h = mean_cov_z(&fs, &y0, z)?;
        assert!((h.mean[0] - g.mean[0]).abs() < 1e-12 && (time_of(&fs, z) - t).abs() < 1e-9);
    }
    Ok(())
}
