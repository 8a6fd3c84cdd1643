use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn kdd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kdd"))
        .args(args)
        .env("KDD_THREADS", "1")
        .output()
        .expect("kdd runs")
}

fn ok(args: &[&str]) -> Value {
    let out = kdd(args);
    assert!(
        out.status.success(),
        "kdd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn code(args: &[&str]) -> i32 {
    kdd(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(path: &Path) -> Value {
    let mut m = path.as_os_str().to_owned();
    m.push(".manifest.json");
    serde_json::from_str(&fs::read_to_string(PathBuf::from(m)).unwrap()).unwrap()
}

struct Fixture {
    dir: TempDir,
    sens: PathBuf,
    w: PathBuf,
}

fn fixture(dims: &str, coils: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let sens = dir.path().join("sens");
    let w = dir.path().join("w");
    ok(&["synth", "--dims", dims, "--coils", coils, "--seed", "3", "--out", s(&sens)]);
    ok(&["compute-w", "--sens", s(&sens), "--out", s(&w)]);
    Fixture { dir, sens, w }
}

#[test]
fn design_and_evaluate_agree() {
    let f = fixture("16,16", "4");
    let pattern = f.dir.path().join("p.txt");
    let logged = ok(&["design", "--w", s(&f.w), "--n", "64", "--out", s(&pattern)]);
    let j = logged["objective"].as_f64().unwrap();
    let expect = format!("{j:e}");
    let eval = ok(&["evaluate", "--w", s(&f.w), "--pattern", s(&pattern), "--expect", &expect]);
    let j2 = eval["objective"].as_f64().unwrap();
    assert!((j - j2).abs() <= 1e-8 * j.abs(), "{j} vs {j2}");
    assert_eq!(eval["samples"], 64);

    let approx = f.dir.path().join("q.txt");
    ok(&["design", "--w", s(&f.w), "--n", "64", "--algo", "approx", "--out", s(&approx)]);
    assert_eq!(fs::read(&pattern).unwrap(), fs::read(&approx).unwrap());
}

#[test]
fn pattern_files_round_trip() {
    let f = fixture("12,8", "2");
    let pattern = f.dir.path().join("p.txt");
    ok(&["design", "--w", s(&f.w), "--n", "20", "--out", s(&pattern)]);
    let text = fs::read_to_string(&pattern).unwrap();
    assert!(text.starts_with("kdd-pattern v1 12 8 1\n"));
    let parsed = kdd_core::io::pattern_from_str(&text).unwrap();
    assert_eq!(kdd_core::io::pattern_to_string(&parsed), text);
    assert_eq!(parsed.total(), 20);
}

#[test]
fn manifests_record_inputs_outputs_and_seeds() {
    let f = fixture("8,8", "2");
    let pattern = f.dir.path().join("p.txt");
    ok(&["design", "--w", s(&f.w), "--n", "16", "--seed", "11", "--tie-break", "random", "--out", s(&pattern)]);
    let m = manifest(&pattern);
    assert_eq!(m["tool"], "kdd");
    assert_eq!(m["command"], "design");
    assert_eq!(m["seeds"], serde_json::json!([11]));
    assert_eq!(m["threads"], 1);
    let inputs = m["inputs"].as_array().unwrap();
    assert_eq!(inputs.len(), 2, "header and payload of w");
    assert!(inputs.iter().all(|r| r["sha256"].as_str().unwrap().len() == 64));
    assert_eq!(m["outputs"][0]["path"], s(&pattern));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);

    let again = f.dir.path().join("again.txt");
    ok(&["design", "--w", s(&f.w), "--n", "16", "--seed", "11", "--tie-break", "random", "--out", s(&again)]);
    assert_eq!(fs::read(&pattern).unwrap(), fs::read(&again).unwrap());
    assert_eq!(manifest(&again)["outputs"][0]["sha256"], m["outputs"][0]["sha256"]);
}

#[test]
fn quotas_and_frames() {
    let dir = tempfile::tempdir().unwrap();
    let sens = dir.path().join("sens");
    let w = dir.path().join("w");
    ok(&["synth", "--dims", "8,8", "--coils", "2", "--frames", "4", "--coeffs", "2", "--out", s(&sens)]);
    ok(&["compute-w", "--sens", s(&sens), "--out", s(&w)]);
    let pattern = dir.path().join("p.txt");
    let map = dir.path().join("dj.pgm");
    let args = [
        "design", "--w", s(&w), "--n", "20", "--quota", "0:5", "--quota", "1:5", "--quota", "2:5", "--quota", "3:5",
        "--out", s(&pattern), "--delta-j", s(&map),
    ];
    ok(&args);
    let p = kdd_core::io::read_pattern(&pattern).unwrap();
    assert_eq!(p.totals(), &[5, 5, 5, 5]);
    let (h, wd, _) = kdd_core::io::read_pgm(&map).unwrap();
    assert_eq!((h, wd), (32, 8));
}

#[test]
fn exit_codes_are_distinct() {
    let f = fixture("8,8", "2");
    let missing = f.dir.path().join("missing");
    assert_eq!(code(&["compute-w", "--sens", s(&missing), "--out", s(&f.w)]), 4);
    assert_eq!(code(&["design", "--w", s(&f.w)]), 2);
    assert_eq!(code(&["design", "--w", s(&f.w), "--n", "1000", "--no-repeats", "--out", "x"]), 3);

    let other = fixture("16,16", "2");
    let pattern = other.dir.path().join("p.txt");
    ok(&["design", "--w", s(&other.w), "--n", "8", "--out", s(&pattern)]);
    assert_eq!(code(&["evaluate", "--w", s(&f.w), "--pattern", s(&pattern)]), 5);

    let own = f.dir.path().join("p.txt");
    ok(&["design", "--w", s(&f.w), "--n", "8", "--out", s(&own)]);
    assert_eq!(code(&["evaluate", "--w", s(&f.w), "--pattern", s(&own), "--expect", "1.5"]), 6);

    let config = f.dir.path().join("bad.json");
    fs::write(
        &config,
        r#"{"model": {"source": "coils", "dims": [8, 8]}, "acceleration": 2, "output": "o", "speed": 1}"#,
    )
    .unwrap();
    assert_eq!(code(&["run", "--config", s(&config)]), 3);
}

#[test]
fn exact_gfactor_of_full_sampling_is_one() {
    let f = fixture("8,8", "2");
    let pattern = f.dir.path().join("full.txt");
    ok(&["design", "--w", s(&f.w), "--n", "64", "--no-repeats", "--out", s(&pattern)]);
    let g = f.dir.path().join("g");
    let pgm = f.dir.path().join("g.pgm");
    let r = ok(&[
        "gfactor", "--sens", s(&f.sens), "--pattern", s(&pattern), "--exact", "--out", s(&g), "--pgm", s(&pgm),
        "--window", "0,2",
    ]);
    assert!((r["stats"]["max"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let (_, data) = kdd_core::io::read_array(&g).unwrap();
    assert_eq!(data.len(), 64);
    let (h, w, px) = kdd_core::io::read_pgm(&pgm).unwrap();
    assert_eq!((h, w), (8, 8));
    assert!(px.iter().all(|&v| v == 128));
}

#[test]
fn caipi_report_lists_every_cell() {
    let f = fixture("12,12", "4");
    let csv = f.dir.path().join("caipi.csv");
    let r = ok(&["caipi", "--R", "3", "--w", s(&f.w), "--report", s(&csv)]);
    let cells = r["cells"].as_u64().unwrap() as usize;
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), cells);
    let objectives: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(objectives.windows(2).all(|p| p[0] <= p[1]));
    assert_eq!(&rows[0][8], "1.000000000");
}

#[test]
fn power_vanishes_on_samples() {
    let f = fixture("8,8", "2");
    let pattern = f.dir.path().join("p.txt");
    ok(&["design", "--w", s(&f.w), "--n", "16", "--out", s(&pattern)]);
    let out = f.dir.path().join("p2");
    let csv = f.dir.path().join("p2.csv");
    let r = ok(&["power", "--sens", s(&f.sens), "--pattern", s(&pattern), "--out", s(&out), "--csv", s(&csv)]);
    assert!(r["p2_sampled_max"].as_f64().unwrap() <= 1e-6 * r["kernel_diagonal"].as_f64().unwrap());
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(reader.records().count(), 64);
}

#[test]
fn readout_models_design_on_the_phase_axis() {
    let dir = tempfile::tempdir().unwrap();
    let sens = dir.path().join("sens");
    let w = dir.path().join("w");
    ok(&["synth", "--dims", "16,12", "--coils", "3", "--readout-axis", "1", "--out", s(&sens)]);
    let info = ok(&["compute-w", "--sens", s(&sens), "--out", s(&w)]);
    assert_eq!(info["collapsed"], true);
    let pattern = dir.path().join("p.txt");
    ok(&["design", "--w", s(&w), "--n", "8", "--no-repeats", "--out", s(&pattern)]);
    let g = dir.path().join("g");
    let r = ok(&["gfactor", "--sens", s(&sens), "--pattern", s(&pattern), "--replicas", "8", "--out", s(&g)]);
    assert!(r["stats"]["max"].as_f64().unwrap() >= 1.0 - 0.5);
    let csv = dir.path().join("report.csv");
    ok(&[
        "report", "--sens", s(&sens), "--pattern", &format!("min-tr={}", s(&pattern)), "--replicas", "4",
        "--out", s(&csv),
    ]);
    assert!(fs::read_to_string(&csv).unwrap().starts_with("label,samples,acceleration,mse,mse_norm,tr2"));
}

#[test]
fn run_pipeline_writes_a_normalized_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let config = dir.path().join("exp.json");
    let text = serde_json::json!({
        "model": {"source": "coils", "dims": [64, 64], "coils": 8, "seed": 1},
        "acceleration": 4,
        "baselines": ["uniform", "poisson-disc"],
        "replicas": 20,
        "seed": 7,
        "output": out,
    });
    fs::write(&config, text.to_string()).unwrap();
    let r = ok(&["run", "--config", s(&config)]);
    let rows = r["rows"].as_array().unwrap();
    let row = |label: &str| rows.iter().find(|x| x["label"] == label).unwrap();
    let num = |label: &str, key: &str| row(label)[key].as_f64().unwrap();
    assert_eq!(row("min-tr")["samples"], 1024);
    assert_eq!(row("uniform")["samples"], 1024);
    assert_eq!(num("uniform", "tr2_norm"), 1.0);
    assert_eq!(num("uniform", "mse_norm"), 1.0);
    assert!(num("min-tr", "tr2") < num("poisson-disc", "tr2"));
    assert!(num("min-tr", "g_median") < num("poisson-disc", "g_median"));
    assert!(row("min-tr")["seconds"].as_f64().is_some());
    for file in ["report.csv", "manifest.json", "min-tr.txt", "uniform.txt", "poisson-disc.txt", "w.json", "sens.raw"] {
        assert!(out.join(file).exists(), "{file}");
    }
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "run");
    assert_eq!(m["seeds"], serde_json::json!([0, 7]));
}
