use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hifm::data::{self, DataKind, Dataset, FileFormat};
use hifm::model::{self, MlpParams};
use hifm::train::{init_model, TrainConfig};

fn hifm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hifm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = hifm(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn field(summary: &str, key: &str) -> f64 {
    summary
        .split([',', '\n'])
        .find_map(|kv| kv.trim().strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing in {summary}"))
        .parse()
        .unwrap()
}

#[test]
fn gen_data_shapes_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = ok(&["gen-data", "--energy", "quadratic", "--n", "1000", "--thin", "10", "--out", "a.bin"], d);
    assert!(s.contains("n=1000, dim=2"), "{s}");
    let a = data::load(&d.join("a.bin"), FileFormat::Binary).unwrap();
    assert_eq!((a.len(), a.dim()), (1000, 2));
    ok(&["gen-data", "--energy", "quadratic", "--n", "1000", "--thin", "10", "--out", "b.bin"], d);
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("b.bin")).unwrap());
    ok(&["gen-data", "--energy", "quadratic", "--n", "1000", "--thin", "10", "--seed", "3", "--out", "c.bin"], d);
    assert_ne!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("c.bin")).unwrap());

    let s = ok(&["gen-data", "--energy", "formation", "--m", "5", "--spatial-dim", "2", "--n", "20", "--tau", "0.01", "--out", "f.csv"], d);
    assert!(s.contains("dim=10"), "{s}");

    let bad = hifm(&["gen-data", "--energy", "quadratic", "--bogus", "--out", "x.bin"], d);
    assert_eq!(bad.status.code(), Some(2));
    let bad = hifm(&["gen-data", "--energy", "quadratic", "--eta", "5", "--tau", "0", "--eigs", "1,100", "--out", "x.bin"], d);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("smaller step"));
}

#[test]
fn hessian_reports_nulls_and_condition() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--energy", "lj", "--m", "13", "--n", "3", "--tau", "0.02", "--refine-steps", "2000", "--eta", "1e-3", "--out", "lj.bin"], d);
    let s = ok(&["hessian", "--data", "lj.bin", "--energy", "formation", "--index", "2", "--out", "s.csv"], d);
    assert_eq!(field(&s, "null_count"), 6.0);
    assert_eq!(field(&s, "condition"), 2.0);
    let csv = fs::read_to_string(d.join("s.csv")).unwrap();
    assert!(csv.starts_with("index,alpha_raw,alpha_processed,is_null\n"));
    assert_eq!(csv.lines().count(), 40);
    assert_eq!(csv.matches(",true").count(), 6);

    ok(&["gen-data", "--energy", "quadratic", "--n", "5", "--out", "q.bin"], d);
    let s = ok(&["hessian", "--data", "q.bin", "--energy", "quadratic", "--out", "q.csv"], d);
    assert_eq!(field(&s, "null_count"), 0.0);
    assert_eq!(field(&s, "condition"), 2.0);
    let s = ok(&["hessian", "--data", "q.bin", "--energy", "quadratic", "--c", "none", "--out", "q.csv"], d);
    assert_eq!(field(&s, "condition"), 25.0);
    assert_eq!(hifm(&["hessian", "--data", "q.bin", "--energy", "quadratic", "--index", "9", "--out", "q.csv"], d).status.code(), Some(1));
}

#[test]
fn train_writes_artifacts_and_learns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-data", "--energy", "quadratic", "--n", "500", "--thin", "50", "--out", "well.bin"], d);
    fs::write(
        d.join("run.cfg"),
        "data = well.bin\nmethod = optimal_transport\nsteps = 200\nbatch_size = 64\nhidden = 32,32\nlr = 0.003\n",
    )
    .unwrap();
    ok(&["train", "--config", "run.cfg", "--out-dir", "r"], d);
    let log = fs::read_to_string(d.join("r/train_log.csv")).unwrap();
    assert!(log.starts_with("step,loss,eval_nll,eval_nfe,wall_ms,clamp_count\n"));
    let losses: Vec<f64> = log.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 200);
    let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = losses[180..].iter().sum::<f64>() / 20.0;
    assert!(tail < head, "{head} -> {tail}");
    let echo = fs::read_to_string(d.join("r/config.txt")).unwrap();
    assert!(echo.contains("method = optimal_transport\n") && echo.contains("steps = 200\n"));

    // the echoed config reproduces the run
    ok(&["train", "--config", "r/config.txt", "--out-dir", "r2"], d);
    assert_eq!(fs::read(d.join("r/model.bin")).unwrap(), fs::read(d.join("r2/model.bin")).unwrap());
    assert_eq!(log, fs::read_to_string(d.join("r2/train_log.csv")).unwrap());

    ok(&["train", "--config", "run.cfg", "--set", "steps=0", "--out-dir", "r0"], d);
    assert_eq!(fs::read_to_string(d.join("r0/train_log.csv")).unwrap().lines().count(), 1);
    assert!(model::load(&d.join("r0/model.bin")).is_ok());

    let bad = hifm(&["train", "--config", "run.cfg", "--set", "speed=3"], d);
    assert_eq!(bad.status.code(), Some(1));
}

fn write_data(d: &Path, name: &str, rows: &[Vec<f64>]) {
    let dim = rows[0].len();
    let ds = Dataset::new(rows.concat(), dim, DataKind::Generic, "t").unwrap();
    data::store(&ds, &d.join(name), FileFormat::from_path(Path::new(name))).unwrap();
}

fn log_normal(y: &[f64]) -> f64 {
    y.iter().map(|v| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln()).sum()
}

#[test]
fn nll_of_zero_and_affine_fields() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rows = vec![vec![0.3, -1.2], vec![1.5, 0.4], vec![-0.7, 0.0]];
    write_data(d, "pts.csv", &rows);

    model::save(&MlpParams::from_parts(vec![3, 3], vec![0.0; 12]).unwrap(), &d.join("zero.bin")).unwrap();
    let s = ok(&["nll", "--model", "zero.bin", "--data", "pts.csv"], d);
    let expect = -rows.iter().map(|r| log_normal(r)).sum::<f64>() / 3.0;
    assert!((field(&s, "mean_nll") - expect).abs() < 1e-6, "{s} vs {expect}");

    // v = diag(m) y + c with v_z = 1; output rows are (v_y0, v_y1, v_z)
    let (m, c) = ([0.4, -0.9], [0.2, 0.5]);
    #[rustfmt::skip]
    let params = vec![
        m[0], 0.0, 0.0,
        0.0, m[1], 0.0,
        0.0, 0.0, 0.0,
        c[0], c[1], 1.0,
    ];
    model::save(&MlpParams::from_parts(vec![3, 3], params).unwrap(), &d.join("affine.bin")).unwrap();
    let exact: f64 = rows
        .iter()
        .map(|y| {
            let y0: Vec<f64> = (0..2).map(|i| (-m[i]).exp() * (y[i] + c[i] / m[i]) - c[i] / m[i]).collect();
            -log_normal(&y0) + m[0] + m[1]
        })
        .sum::<f64>()
        / 3.0;
    let s = ok(&["nll", "--model", "affine.bin", "--data", "pts.csv", "--rtol", "1e-6", "--atol", "1e-6", "--out", "n.csv"], d);
    assert!((field(&s, "mean_nll") - exact).abs() < 1e-2, "{s} vs {exact}");
    assert_eq!(field(&s, "failures"), 0.0);
    assert_eq!(fs::read_to_string(d.join("n.csv")).unwrap().lines().count(), 4);

    let mut last = f64::INFINITY;
    for tol in ["1e-8", "1e-5", "1e-2"] {
        let s = ok(&["nll", "--model", "affine.bin", "--data", "pts.csv", "--rtol", tol, "--atol", tol], d);
        let nfe = field(&s, "mean_nfe");
        assert!(nfe <= last, "nfe rose to {nfe} at tolerance {tol}");
        last = nfe;
    }
}

#[test]
fn sampling_is_reproducible_and_centered() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = TrainConfig { hidden: vec![8], seed: 1, ..Default::default() };
    let p = init_model(&cfg, 6).unwrap();
    model::save(&p, &d.join("m.bin")).unwrap();
    ok(&["sample", "--model", "m.bin", "--n", "7", "--seed", "4", "--spatial-dim", "3", "--out", "a.bin"], d);
    ok(&["sample", "--model", "m.bin", "--n", "7", "--seed", "4", "--spatial-dim", "3", "--out", "b.bin"], d);
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("b.bin")).unwrap());
    let s = data::load(&d.join("a.bin"), FileFormat::Binary).unwrap();
    assert_eq!((s.len(), s.dim()), (7, 6));
    assert_eq!(s.kind, DataKind::Particles { m: 2, spatial_dim: 3 });
    for r in s.rows() {
        for k in 0..3 {
            assert!((r[k] + r[3 + k]).abs() < 1e-10);
        }
    }
    assert_eq!(hifm(&["sample", "--model", "m.bin", "--spatial-dim", "4", "--out", "c.bin"], d).status.code(), Some(1));
}

#[test]
fn check_suite_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = hifm(&["check"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    let out = hifm(&["--threads", "1", "check", "--perturb"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}
