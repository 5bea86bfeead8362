use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;
use tempfile::TempDir;

fn cooplearn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cooplearn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) {
    let mut s = format!("{header}\n");
    for r in rows {
        let line: Vec<String> = r.iter().map(f64::to_string).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

struct Data {
    dir: TempDir,
}

impl Data {
    fn new(seed: u64, n: usize) -> Data {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |p: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect()
        };
        let x = draw(4);
        let z = draw(3);
        let noise = draw(1);
        let y: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![2.0 * x[i][0] - x[i][1] + 1.5 * z[i][0] + 0.5 * noise[i][0]])
            .collect();
        write_csv(&dir.path().join("x.csv"), "x1,x2,x3,x4", &x);
        write_csv(&dir.path().join("z.csv"), "z1,z2,z3", &z);
        write_csv(&dir.path().join("y.csv"), "y", &y);
        Data { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn fit(&self, out: &str, extra: &[&str]) -> Output {
        let views = format!("{},{}", self.s("x.csv"), self.s("z.csv"));
        let (y, o) = (self.s("y.csv"), self.s(out));
        let mut args = vec![
            "fit",
            "--view-paths",
            &views,
            "--response-path",
            &y,
            "--output-dir",
            &o,
            "--k-folds",
            "5",
            "--n-lambda",
            "20",
        ];
        args.extend_from_slice(extra);
        cooplearn(&args)
    }
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(path: &Path) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect()
}

#[test]
fn fit_then_predict_reproduces_fitted_values() {
    let data = Data::new(1, 60);
    ok(&data.fit("out", &["--rho-grid", "0,0.5,1"]));
    for f in ["fit.json", "path.csv", "fitted.csv", "fit.log"] {
        assert!(data.path("out").join(f).exists(), "{f}");
    }
    let report = read_json(&data.path("out/fit.json"));
    assert_eq!(report["schema"], 1);
    let pred = data.s("pred.csv");
    let views = format!("{},{}", data.s("x.csv"), data.s("z.csv"));
    let fit = data.s("out/fit.json");
    ok(&cooplearn(&["predict", "--fit", &fit, "--view-paths", &views, "--output", &pred]));
    let a = column(&data.path("out/fitted.csv"));
    let b = column(&data.path("pred.csv"));
    assert_eq!(a.len(), 60);
    for (u, v) in a.iter().zip(&b) {
        assert!((u - v).abs() <= 1e-10, "{u} vs {v}");
    }
}

#[test]
fn rho_zero_path_has_one_row_per_lambda() {
    let data = Data::new(2, 80);
    ok(&data.fit("out", &["--rho-grid", "0"]));
    let report = read_json(&data.path("out/fit.json"));
    assert_eq!(report["selection"]["rho"].as_f64(), Some(0.0));
    let path = fs::read_to_string(data.path("out/path.csv")).unwrap();
    assert!(path.starts_with("lambda,df_x,df_z,df,objective"), "{path}");
    assert_eq!(path.lines().count(), 21);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let data = Data::new(3, 50);
    ok(&data.fit("a", &["--workers", "1"]));
    ok(&data.fit("b", &["--workers", "3"]));
    for f in ["fit.json", "path.csv", "fitted.csv"] {
        assert_eq!(
            fs::read(data.path("a").join(f)).unwrap(),
            fs::read(data.path("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn large_pair_weight_forces_agreement() {
    let data = Data::new(4, 60);
    fs::write(
        data.path("pairs.json"),
        r#"{"pairs": [{"view_a": 0, "col_a": 0, "view_b": 1, "col_b": 0}], "rho2": 1000000.0}"#,
    )
    .unwrap();
    let pairs = data.s("pairs.json");
    let out = data.fit("out", &["--rho-grid", "0.5", "--pairs-path", &pairs]);
    ok(&out);
    let report = read_json(&data.path("out/fit.json"));
    let d = report["paired_discrepancy"].as_f64().unwrap();
    assert!(d < 1e-3, "{d}");
}

#[test]
fn missing_response_is_a_config_error() {
    let data = Data::new(5, 20);
    let views = format!("{},{}", data.s("x.csv"), data.s("z.csv"));
    let out = cooplearn(&["fit", "--view-paths", &views, "--output-dir", &data.s("out")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("response_path"));

    let gone = data.s("nope.csv");
    let out = cooplearn(&["fit", "--view-paths", &views, "--response-path", &gone]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ragged_csv_names_the_row() {
    let data = Data::new(6, 20);
    fs::write(data.path("z.csv"), "a,b\n1,2\n3\n").unwrap();
    let out = data.fit("out", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ragged row 2"));
}

#[test]
fn cv_writes_error_surface() {
    let data = Data::new(7, 50);
    let views = format!("{},{}", data.s("x.csv"), data.s("z.csv"));
    let (y, o) = (data.s("y.csv"), data.s("cv"));
    let args = [
        "cv", "--view-paths", &views, "--response-path", &y, "--output-dir", &o, "--rho-grid", "0,1", "--n-lambda",
        "10", "--k-folds", "5", "--adaptive",
    ];
    ok(&cooplearn(&args));
    let table = fs::read_to_string(data.path("cv/cv.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 10);
    let report = read_json(&data.path("cv/cv.json"));
    assert_eq!(report["adaptive"]["ratios"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_writes_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = out.display().to_string();
    ok(&cooplearn(&[
        "simulate", "--p-per-view", "40", "--n-train", "30", "--n-test", "15", "--output-dir", &o,
    ]));
    let view = fs::read_to_string(out.join("train/view1.csv")).unwrap();
    assert_eq!(view.lines().count(), 31);
    assert_eq!(view.lines().next().unwrap().split(',').count(), 40);
    assert_eq!(column(&out.join("test/response.csv")).len(), 15);
    let side = read_json(&out.join("simulation.json"));
    assert!(side["realized_snr"].as_f64().unwrap() > 0.0);
}

#[test]
fn theory_check_passes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("theory.json");
    let r = report.display().to_string();
    ok(&cooplearn(&["theory-check", "--mc-draws", "5000", "--output", &r]));
    let v = read_json(&report);
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}
