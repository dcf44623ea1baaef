use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_ssr");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn ssr(args: &[&str], out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SSR_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn columns(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let mut cols = vec![Vec::new(); header.len()];
    for l in lines {
        for (c, v) in cols.iter_mut().zip(l.split(',')) {
            c.push(v.parse().unwrap_or(f64::NAN));
        }
    }
    (header, cols)
}

const SMALL_SYSTEM: &str = r#"
[system]
gamma_0 = 500.0
gamma_1 = 300.0
lambda_0 = 5e3
lambda_1 = 4e4
duration = 1e-3

[priors]
p0 = 0.5

[mc]
runs = 2000
seed = 3
"#;

#[test]
fn pdf_columns_are_normalised() {
    let tmp = TempDir::new().unwrap();
    ok(&ssr(&["pdf", "-c", &config("switching_histograms.toml")], tmp.path()));
    for file in ["pdf_initial.csv", "pdf_final.csv"] {
        let (header, cols) = columns(&tmp.path().join(file));
        assert_eq!(header, ["n", "pmf_0", "pmf_1"]);
        for c in &cols[1..] {
            let s: f64 = c.iter().sum();
            assert!((s - 1.0).abs() <= 1e-6, "{file}: sum {s}");
        }
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("pdf.json")).unwrap()).unwrap();
    let p0 = json["final_state_probability"]["0"].as_f64().unwrap();
    let p1 = json["final_state_probability"]["1"].as_f64().unwrap();
    assert!((p0 + p1 - 1.0).abs() < 1e-12);
}

#[test]
fn no_switching_gives_poisson() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYSTEM);
    let out = tmp.path().join("out");
    ok(&ssr(&["pdf", "-c", &cfg, "--set", "system.gamma_0=0", "--set", "system.gamma_1=0"], &out));
    let (_, cols) = columns(&out.join("pdf_initial.csv"));
    for (col, lambda) in [(1, 5e3), (2, 4e4)] {
        let mu: f64 = lambda * 1e-3;
        let mut p = (-mu).exp();
        for (n, v) in cols[col].iter().enumerate() {
            if n > 0 {
                p *= mu / n as f64;
            }
            assert!((v - p).abs() <= 1e-9, "n={n}: {v} vs {p}");
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYSTEM);
    let runs: [(&[&str], &[&str]); 4] = [
        (&["pdf", "-c", &cfg], &["pdf_initial.csv", "pdf_final.csv", "pdf.json"]),
        (&["mc", "-c", &cfg, "--compare"], &["mc_histograms.csv", "mc_compare.csv"]),
        (
            &["error-curve", "-c", &config("error_vs_duration.toml"), "--set", "error_curve.gammas=[100.0]"],
            &["error_vs_duration.csv", "error_vs_efficiency.csv"],
        ),
        (
            &["optimize", "-c", &config("electron_readout.toml")],
            &["plane_fidelity.csv", "plane_threshold.csv", "plane_attempts.csv", "plane_time.csv", "optimum.json"],
        ),
    ];
    for (i, (args, files)) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("a{i}"));
        let b = tmp.path().join(format!("b{i}"));
        ok(&ssr(args, &a));
        ok(&ssr(args, &b));
        for f in *files {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs between runs");
        }
    }
}

#[test]
fn mc_seed_changes_histograms() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYSTEM);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&ssr(&["mc", "-c", &cfg, "--seed", "1"], &a));
    ok(&ssr(&["mc", "-c", &cfg, "--seed", "2"], &b));
    assert_ne!(fs::read(a.join("mc_histograms.csv")).unwrap(), fs::read(b.join("mc_histograms.csv")).unwrap());
}

#[test]
fn too_few_runs_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYSTEM);
    let o = ssr(&["mc", "-c", &cfg, "--runs", "10"], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mc.runs"));
}

#[test]
fn negative_rate_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_SYSTEM);
    let o = ssr(&["pdf", "-c", &cfg, "--set", "system.lambda_1=-4"], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("system.lambda_1"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_SYSTEM}\n[extra]\nx = 1\n"));
    let o = ssr(&["pdf", "-c", &cfg], &tmp.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_grid_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = ssr(
        &["optimize", "-c", &config("electron_readout.toml"), "--set", "optimize.grid.durations=[]"],
        &tmp.path().join("out"),
    );
    assert_eq!(o.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("optimize.grid.durations"));
}

#[test]
fn missing_config_file_fails() {
    let tmp = TempDir::new().unwrap();
    let o = ssr(&["pdf", "-c", "/nonexistent/run.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn error_minimum_for_slow_switching() {
    let tmp = TempDir::new().unwrap();
    ok(&ssr(&["error-curve", "-c", &config("error_vs_duration.toml"), "--set", "error_curve.gammas=[10.0]"], tmp.path()));
    let (header, cols) = columns(&tmp.path().join("error_vs_duration.csv"));
    let d = header.iter().position(|h| h == "duration").unwrap();
    let e = header.iter().position(|h| h == "error_final").unwrap();
    let best = (0..cols[e].len()).min_by(|&a, &b| cols[e][a].total_cmp(&cols[e][b])).unwrap();
    assert!((cols[d][best] - 2.5e-3).abs() <= 0.5e-3 + 1e-12, "minimum at {}", cols[d][best]);
}

#[test]
fn readout_and_preparation_optima_differ() {
    let tmp = TempDir::new().unwrap();
    let optimum = |name: &str| {
        let out = tmp.path().join(name);
        ok(&ssr(&["optimize", "-c", &config(name)], &out));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("optimum.json")).unwrap()).unwrap();
        let p = &v["optimum"];
        assert!(p["fidelity"].as_f64().unwrap() >= 0.99 - 1e-9);
        (p["control"].as_f64().unwrap(), p["duration"].as_f64().unwrap())
    };
    assert_ne!(optimum("electron_readout.toml"), optimum("electron_preparation.toml"));
}

#[test]
fn unreachable_target_exits_four_after_writing_planes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = ssr(
        &[
            "optimize",
            "-c",
            &config("electron_readout.toml"),
            "--set",
            "optimize.grid.powers=[5e-9]",
            "--set",
            "optimize.grid.durations=[0.5e-6, 1e-6]",
            "--set",
            "optimize.scenario.target_fidelity=0.9999",
            "--set",
            "optimize.scenario.target_state=1",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("plane_fidelity.csv").exists());
    assert!(!out.join("optimum.json").exists());
}

#[test]
fn other_scenarios_run() {
    let tmp = TempDir::new().unwrap();
    for name in ["charge_preparation.toml", "nuclear_ssr.toml"] {
        let out = tmp.path().join(name);
        ok(&ssr(&["optimize", "-c", &config(name)], &out));
        assert!(out.join("optimum.json").exists());
    }
}

#[test]
fn csv_values_round_trip() {
    let tmp = TempDir::new().unwrap();
    ok(&ssr(&["pdf", "-c", &config("switching_histograms.toml")], tmp.path()));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("pdf.json")).unwrap()).unwrap();
    let (_, cols) = columns(&tmp.path().join("pdf_initial.csv"));
    let exact: Vec<f64> = json["pmf"]["initial_1"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(exact.len(), cols[2].len());
    for (a, b) in exact.iter().zip(&cols[2]) {
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
    }
}
