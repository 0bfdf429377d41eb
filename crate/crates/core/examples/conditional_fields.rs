//! Regression targets along one conditional path: the anisotropic field in
//! its raw and finite forms next to the optimal-transport field.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hifm::flow::{cond_field_finite, cond_field_z, ot_field, sample_path_point};
use hifm::linalg::SymMatrix;
use hifm::spectrum::{build_flow_spec, FlowConfig};

fn main() -> hifm::Result<()> {
    let y1 = vec![1.0, 0.5];
    let cfg = FlowConfig::default();
    let fs = build_flow_spec(y1.clone(), &SymMatrix::from_diag(&[1.0, 25.0]), &cfg)?;
    let y0 = vec![0.0; 2];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("{:>5} {:>18} {:>24} {:>18} {:>18}", "z", "y", "(v_y, v_z)", "finite v_y", "ot v_y");
    for z in [0.0, 0.2, 0.5, 0.8, 0.95] {
        let p = sample_path_point(&fs, z, &mut rng)?;
        let (vy, vz) = cond_field_z(&fs, &p.y, z, &y0)?;
        let fin = cond_field_finite(&fs, &p.y, z, &y0)?;
        let ot = ot_field(&p.y, z, &y1, 1e-5)?;
        println!(
            "{z:>5.2} {:>18} {:>24} {:>18} {:>18}",
            format!("{:.3?}", p.y),
            format!("({:.3?}, {vz:.3})", vy),
            format!("{fin:.3?}"),
            format!("{ot:.3?}")
        );
    }
    Ok(())
}
