use std::path::Path;
use std::process::{Command, Output};

use ncprob::pmf::{load_histogram, Arm, Format};
use ncprob::scan::ScanReport;

fn ncprob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncprob")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_ideal_twin_has_the_requested_mean() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("twin.json");
    let o = ncprob(&["gen", "--ideal-twin", "B=8.86", "Mp=80", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let p = load_histogram(std::fs::File::open(&out).unwrap(), Format::Json).unwrap();
    assert!((p.marginal(Arm::Signal).mean() - 8.86).abs() < 1e-9);
    assert!((p.marginal(Arm::Idler).mean() - 8.86).abs() < 1e-9);
}

#[test]
fn eval_on_coherent_is_the_boundary() {
    let dir = tempfile::tempdir().unwrap();
    let coh = dir.path().join("coherent.json");
    assert!(ncprob(&["gen", "--coherent", "mu_s=1.2", "mu_i=1.2", "--out", path(&coh)]).status.success());
    let o = ncprob(&["eval", "--criterion", "A:E001", "--in", path(&coh)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.ends_with(",classical boundary"), "{row}");
    let value: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert!(value.abs() < 1e-12);
}

#[test]
fn depth_rows_per_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let twin = dir.path().join("twin.json");
    assert!(ncprob(&["gen", "--ideal-twin", "B=2", "Mp=5", "--out", path(&twin)]).status.success());
    let o = ncprob(&["depth", "--in", path(&twin), "--modes", "5", "--criterion", "A:E001", "--criterion", "E:2,1,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "criterion,indices,value_at_origin,tau,m_tau,bracket_low,bracket_high,evaluations,flags");
    let rows: Vec<csv::StringRecord> = csv::Reader::from_reader(text.as_bytes()).records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let tau: f64 = rows[0][3].parse().unwrap();
    assert!(tau > 0.0 && tau < 1.0);
    let (lo, hi): (f64, f64) = (rows[0][5].parse().unwrap(), rows[0][6].parse().unwrap());
    assert!(lo <= tau && tau <= hi && hi - lo <= 1e-4);

    let o = ncprob(&["nccp", "--in", path(&twin), "--modes", "5", "--criterion", "A:E001"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("criterion,indices,value_at_origin,nu,"));
}

#[test]
fn scan_csv_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let twin = dir.path().join("twin.json");
    assert!(ncprob(&["gen", "--ideal-twin", "B=2", "Mp=5", "--out", path(&twin)]).status.success());
    let args = ["scan", "--in", path(&twin), "--modes", "5", "--scenario", "grid", "--rows", "1..4", "--cols", "1..4"];
    let a = ncprob(&args);
    let b = ncprob(&[&args[..], &["--threads", "1"]].concat());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let report = ScanReport::from_csv(&a.stdout[..]).unwrap();
    assert_eq!(report.rows.len(), 16);
    assert_eq!(report.to_csv().as_bytes(), &a.stdout[..]);
}

#[test]
fn bootstrap_adds_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    let mut text = String::from("n_s,n_i,count\n");
    for (n, c) in [(0, 500), (1, 250), (2, 125), (3, 60), (4, 30)] {
        text.push_str(&format!("{n},{n},{c}\n"));
    }
    text.push_str("1,0,20\n0,1,15\n");
    std::fs::write(&counts, text).unwrap();
    let o = ncprob(&[
        "scan", "--in", path(&counts), "--modes", "1", "--scenario", "grid", "--rows", "1..2", "--cols", "1..2", "--bootstrap", "100", "--seed", "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = ScanReport::from_csv(&o.stdout[..]).unwrap();
    let se = report.errors.unwrap();
    assert_eq!(se.len(), 4);
    assert!(se[0] > 0.0);
}

#[test]
fn transform_dumps_the_kernel() {
    let o = ncprob(&["transform", "--dump-kernel", "--s", "0.5", "--modes", "1", "--n-in", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("n,m,value\n0,0,"));
}

#[test]
fn exit_codes() {
    assert_eq!(ncprob(&["nonsense"]).status.code(), Some(1));
    assert_eq!(ncprob(&["eval", "--in", "/does/not/exist.json", "--criterion", "A:E001"]).status.code(), Some(2));
    assert_eq!(ncprob(&["transform", "--dump-kernel", "--s", "1.5", "--modes", "1"]).status.code(), Some(2));
    assert_eq!(ncprob(&["gen", "--coherent", "mu_s=1"]).status.code(), Some(1));
    let help = ncprob(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("depth"));
}

#[test]
fn defaults_are_machine_readable() {
    let o = ncprob(&["defaults"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["quantify"]["s_width"], 1e-4);
    assert_eq!(v["kernel_method"], "recurrence");
}
