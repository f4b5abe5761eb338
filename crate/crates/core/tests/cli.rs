use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phispline::geometry::{read_points_csv, EuclidPoint, PointSet};
use phispline::harness::{read_report_csv, ConvergenceReport};
use phispline::io::read_numeric_table;
use phispline::kernels::{Kernel, KernelSpec};
use tempfile::TempDir;

fn phispline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phispline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const MATERN: &str = "matern:m=1,rho=0.1,s=2";

fn matern() -> phispline::EuclidKernel64 {
    KernelSpec::parse(MATERN, Some(1)).unwrap().build_euclid().unwrap()
}

#[test]
fn sphere_study_example() {
    let o = phispline(&[
        "study", "--domain", "sphere2", "--kernel", "powerlaw:tau=2", "--target", "zonal:beta=5", "--levels",
        "100,200,400,800,1600",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = read_report_csv(&o.stdout[..]).unwrap();
    assert_eq!(table.rows.len(), 5);
    assert_eq!(table.fitted.len(), 1);
    assert_eq!(table.predicted.len(), 1);
    assert!(table.rows.windows(2).all(|w| w[0].2 > w[1].2));
}

#[test]
fn study_output_is_reproducible_and_rereadable() {
    let dir = TempDir::new().unwrap();
    let args = |out: &str, format: &str| {
        vec![
            "study".to_string(), "--domain".into(), "sphere2".into(), "--kernel".into(), "powerlaw:tau=2,N_max=60".into(),
            "--target".into(), "zonal:beta=5,seed=3".into(), "--levels".into(), "40,80,160".into(), "--metrics".into(),
            "sup,l2,native-residual,pseudo-sup,pseudo-l2".into(), "--eval-points".into(), "3000".into(),
            "--fill-candidates".into(), "5000".into(), "--format".into(), format.into(), "--output".into(), out.into(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for path in [&a, &b] {
        let v = args(p(path), "csv");
        let o = phispline(&v.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    let table = read_report_csv(&bytes[..]).unwrap();
    assert_eq!(table.metrics, ["sup", "l2", "native-residual", "pseudo-sup", "pseudo-l2"]);
    assert_eq!(table.rows.len(), 3);

    let j = dir.path().join("r.json");
    let v = args(p(&j), "json");
    let o = phispline(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = ConvergenceReport::read_json(fs::File::open(&j).unwrap()).unwrap();
    assert_eq!(report.schema, 1);
    assert_eq!(report.rows.len(), 3);
    assert_eq!(report.rows[0].metrics[0], table.rows[0].4[0]);
}

#[test]
fn assert_rates_exit_codes() {
    let base = [
        "study", "--domain", "box:d=1", "--kernel", MATERN, "--target", "translate:center=0.43", "--levels",
        "9,17,33,65", "--metrics", "synthetic-h2", "--assert-rates", "--eval-points", "1000", "--fill-candidates", "2000",
    ];
    let o = phispline(&base);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut strict = base.to_vec();
    strict[10] = "synthetic-h2,sup";
    strict.push("--tolerance=0.01");
    assert_eq!(phispline(&strict).status.code(), Some(2));
}

#[test]
fn malformed_kernel_key() {
    let o = phispline(&[
        "study", "--domain", "sphere2", "--kernel", "powrlaw", "--target", "zonal:beta=5", "--levels", "100,200,400",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("powrlaw"));
    assert!(o.stdout.is_empty());
}

#[test]
fn interp_single_point() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x0,value\n0.3,2.5\n").unwrap();
    let o = phispline(&["interp", "--domain", "box:d=1", "--kernel", MATERN, "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_numeric_table::<f64, _>(&o.stdout[..]).unwrap();
    assert_eq!(t.headers, ["x0", "alpha"]);
    assert!((t.rows[0][1] - 2.5 / matern().value_at_origin()).abs() < 1e-15);
}

#[test]
fn interp_missing_values_column() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "x0,y\n0.3,2.5\n0.6,1\n").unwrap();
    let o = phispline(&["interp", "--domain", "box:d=1", "--kernel", MATERN, "--data", p(&data)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("value"));
}

#[test]
fn interp_round_trip() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    let coeffs = dir.path().join("c.csv");
    let centers = dir.path().join("y.csv");
    let values = dir.path().join("v.csv");
    let sidecar = dir.path().join("c.json");
    let xs: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
    let mut d = String::from("x0,value\n");
    let mut y = String::from("x0\n");
    for x in &xs {
        d += &format!("{x},{}\n", (4.0 * x).cos());
        y += &format!("{x}\n");
    }
    fs::write(&data, d).unwrap();
    fs::write(&centers, y).unwrap();
    let o = phispline(&[
        "interp", "--domain", "box:d=1", "--kernel", MATERN, "--data", p(&data), "--output", p(&coeffs),
        "--sidecar", p(&sidecar),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(fs::read_to_string(&sidecar).unwrap().contains("condition_estimate"));
    let o = phispline(&[
        "interp", "--domain", "box:d=1", "--kernel", MATERN, "--coeffs", p(&coeffs), "--eval", p(&centers),
        "--eval-output", p(&values),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_numeric_table::<f64, _>(fs::File::open(&values).unwrap()).unwrap();
    for (row, x) in t.rows.iter().zip(&xs) {
        assert!((row[1] - (4.0 * x).cos()).abs() < 1e-9, "{row:?}");
    }
    // the coefficient dump is itself a readable table
    let again = read_numeric_table::<f64, _>(fs::File::open(&coeffs).unwrap()).unwrap();
    assert_eq!(again.rows.len(), 12);
}

#[test]
fn power_function_maps() {
    let dir = TempDir::new().unwrap();
    let centers = dir.path().join("y.csv");
    let grid = dir.path().join("g.csv");
    fs::write(&centers, "x0\n0.2\n0.5\n0.8\n").unwrap();
    fs::write(&grid, "x0\n0.2\n0.35\n0.5\n0.8\n").unwrap();
    let o = phispline(&["power", "--domain", "box:d=1", "--kernel", MATERN, "--centers", p(&centers), "--grid", p(&grid)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_numeric_table::<f64, _>(&o.stdout[..]).unwrap();
    assert_eq!(t.headers, ["x0", "power"]);
    for (i, row) in t.rows.iter().enumerate() {
        if i == 1 {
            assert!(row[1] > 1e-3);
        } else {
            assert!(row[1] < 1e-6, "{row:?}");
        }
    }
    let pts: PointSet<EuclidPoint<f64>> = read_points_csv(&fs::read(&grid).unwrap()[..]).unwrap();
    assert_eq!(pts.len(), 4);

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x0\n").unwrap();
    let o = phispline(&["power", "--domain", "box:d=1", "--kernel", MATERN, "--centers", p(&empty), "--grid-size", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = read_numeric_table::<f64, _>(&o.stdout[..]).unwrap();
    let expect = matern().value_at_origin().sqrt();
    assert!(t.rows.iter().all(|r| (r[1] - expect).abs() < 1e-15));
}

#[test]
fn pseudo_identity_matches_interpolant() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("d.csv");
    let grid = dir.path().join("g.csv");
    let mut d = String::from("x0,x1,x2,value\n");
    for i in 0..30 {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / 30.0;
        let r = (1.0 - z * z).sqrt();
        let a = 2.4 * i as f64;
        d += &format!("{},{},{z},{}\n", r * a.cos(), r * a.sin(), z * z);
    }
    fs::write(&data, d).unwrap();
    fs::write(&grid, "x0,x1,x2\n0,0,1\n0.6,0,0.8\n").unwrap();
    let kernel = "powerlaw:tau=2,N_max=40";
    let id = phispline(&["pseudo", "--domain", "sphere2", "--kernel", kernel, "--data", p(&data), "--symbol", "identity", "--grid", p(&grid)]);
    assert_eq!(id.status.code(), Some(0), "{}", stderr(&id));
    let ev = phispline(&["interp", "--domain", "sphere2", "--kernel", kernel, "--data", p(&data), "--eval", p(&grid)]);
    assert_eq!(ev.status.code(), Some(0), "{}", stderr(&ev));
    let a = read_numeric_table::<f64, _>(&id.stdout[..]).unwrap();
    let b = read_numeric_table::<f64, _>(&ev.stdout[..]).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert!((x[3] - y[3]).abs() < 1e-12);
    }
    let lap = phispline(&["pseudo", "--domain", "sphere2", "--kernel", kernel, "--data", p(&data), "--symbol", "s=0.5", "--grid", p(&grid)]);
    assert_eq!(lap.status.code(), Some(0), "{}", stderr(&lap));
    assert!(stdout(&lap).starts_with("x0,x1,x2,value"));
    let bad = phispline(&["pseudo", "--domain", "box:d=1", "--kernel", MATERN, "--data", p(&data), "--symbol", "identity"]);
    assert_eq!(bad.status.code(), Some(1));
}
