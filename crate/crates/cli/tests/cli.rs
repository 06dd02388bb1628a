use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gup_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gup-lab"))
        .args(args)
        .env_remove("GUPLAB_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Single Gaussian family on a coarse grid.
fn small_config(betas: &str, widths: &str, bins: &str) -> String {
    format!(
        r#"schema = 1
seed = 7
betas = {betas}

[grid]
q_nodes = 1024

[[states]]
name = "g"
kind = "gaussian"
width_x = 1.0

[profiles]
widths = {widths}

[[orders]]
alpha = 2.0

{bins}
"#
    )
}

const ONE_BIN: &str = "[[bins]]\ndzeta = 0.25\ndxi = 0.25\n";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn reports(dir: &Path) -> Vec<serde_json::Value> {
    let text = fs::read_to_string(dir.join("reports.json")).unwrap();
    serde_json::from_str::<serde_json::Value>(&text)
        .unwrap()
        .as_array()
        .unwrap()
        .clone()
}

/// Rows of a CSV without quoted fields, keyed by header.
fn csv_rows(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, k: &str) -> f64 {
    row[k].parse().unwrap()
}

#[test]
fn bundled_check_passes_and_writes_reports() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = gup_lab(&["check", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = reports(&out);
    assert_eq!(r.len(), 18 * (11 + 15 * 4));
    assert!(r.iter().all(|x| x["pass"] == true));
    let csv = fs::read_to_string(out.join("reports.csv")).unwrap();
    assert_eq!(csv.lines().count(), r.len() + 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("relations checked: 1278"));
}

#[test]
fn negative_beta_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[0.1, -0.5]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN));
    let o = gup_lab(&["check", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("betas[1]"), "{}", stderr(&o));
    assert!(!tmp.path().join("reports.json").exists());
}

#[test]
fn unknown_relation_is_a_config_error() {
    let o = gup_lab(&["check", "--relations", "PREP_NOPE"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn relation_and_order_filters() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[0.1]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN));
    let o = gup_lab(&[
        "check", "--config", &cfg, "--out", tmp.path().to_str().unwrap(),
        "--relations", "prep_renyi,S1_RENYI", "--order", "position_first",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = reports(tmp.path());
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["id"], "S1_RENYI");
    assert_eq!(r[0]["order"], "position_first");

    let o = gup_lab(&[
        "check", "--config", &cfg, "--out", tmp.path().to_str().unwrap(), "--relations", "PREP_RENYI",
    ]);
    assert_eq!(code(&o), 0);
    let r = reports(tmp.path());
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["id"], "PREP_RENYI");
    assert_eq!(r[0]["alpha"], 2.0);
}

#[test]
fn non_positive_tolerance_is_rejected() {
    let o = gup_lab(&["check", "--relations", "ROBERTSON", "--tol", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("tolerance"), "{}", stderr(&o));
}

#[test]
fn sweep_needs_two_values() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[0.1]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN));
    let o = gup_lab(&["sweep", "--axis", "beta", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("at least 2"));
}

#[test]
fn beta_sweep_sf_decreases() {
    let tmp = TempDir::new().unwrap();
    // Narrow in q so the state stays inside the band at beta = 1.
    let text = small_config("[0.0, 0.01, 0.1, 1.0]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN)
        .replace("width_x = 1.0", "width_x = 2.0");
    let cfg = write_config(tmp.path(), &text);
    let o = gup_lab(&[
        "sweep", "--axis", "beta", "--config", &cfg, "--out", tmp.path().to_str().unwrap(),
        "--relations", "PREP_RENYI",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(tmp.path().join("sweep_beta.csv")).unwrap());
    assert_eq!(rows.len(), 4);
    let sf: Vec<f64> = rows.iter().map(|r| num(r, "s_f")).collect();
    assert_eq!(sf[0], 1.0);
    assert!(sf.windows(2).all(|w| w[1] < w[0]), "{sf:?}");
    for r in &rows {
        assert_eq!(num(r, "axis_value"), num(r, "beta"));
    }
}

#[test]
fn bin_width_sweep_shifts_rhs_by_log_cell() {
    let tmp = TempDir::new().unwrap();
    let bins = "[[bins]]\ndzeta = 0.25\ndxi = 0.25\n\n[[bins]]\ndzeta = 0.5\ndxi = 0.1\n\n[[bins]]\ndzeta = 1.0\ndxi = 1.0\n";
    let cfg = write_config(tmp.path(), &small_config("[0.1]", "[{ f = 0.5, g = 1.0 }]", bins));
    let o = gup_lab(&[
        "sweep", "--axis", "bin_width", "--config", &cfg, "--out", tmp.path().to_str().unwrap(),
        "--relations", "PREP_RENYI_BIN,S1_MP_BIN",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = csv_rows(&fs::read_to_string(tmp.path().join("sweep_bin_width.csv")).unwrap());
    assert!(rows.len() >= 3);
    for r in &rows {
        let cell = (num(r, "dzeta") * num(r, "dxi")).ln();
        let expect = num(r, "rhs_continuum") - cell;
        assert!((num(r, "rhs") - expect).abs() < 1e-12, "{r:?}");
        assert_eq!(num(r, "axis_value"), num(r, "dzeta"));
    }
}

#[test]
fn uniform_density_matches_closed_form() {
    let tmp = TempDir::new().unwrap();
    let text = r#"schema = 1
betas = [0.5]

[grid]
q_nodes = 4096

[[states]]
name = "flat"
kind = "uniform"

[profiles]
widths = [{ f = 0.5, g = 1.0 }]

[[orders]]
alpha = 1.0

[[bins]]
dzeta = 0.25
dxi = 0.25
"#;
    let cfg = write_config(tmp.path(), text);
    let o = gup_lab(&["dump", "--what", "densities", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(tmp.path().join("flat_beta0_q.txt").exists());
    let body = fs::read_to_string(tmp.path().join("flat_beta0_k.txt")).unwrap();
    let beta: f64 = 0.5;
    let rows: Vec<(f64, f64)> = body
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace().map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let n = rows.len();
    assert!(n > 100);
    let mut worst: f64 = 0.0;
    for &(k, u) in &rows[n / 10..n - n / 10] {
        let exact = beta.sqrt() / (std::f64::consts::PI * (1.0 + beta * k * k));
        worst = worst.max(((u - exact) / exact).abs());
    }
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn unknown_dump_target_is_rejected() {
    let o = gup_lab(&["dump", "--what", "spectra"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn dumps_are_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[0.0, 0.1]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for what in ["densities", "states", "ensembles"] {
        for dir in [&a, &b] {
            let o = gup_lab(&["dump", "--what", what, "--config", &cfg, "--out", dir.to_str().unwrap()]);
            assert_eq!(code(&o), 0, "{what}: {}", stderr(&o));
        }
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 2 * (5 + 1 + 2));
    for name in names {
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name:?}");
    }
    let ens = fs::read_to_string(a.join("g_beta1_momentum_first.txt")).unwrap();
    assert!(ens.starts_with("# outcome weight corr leakage capture_u capture_w\n"));
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &small_config("[0.0, 0.1]", "[{ f = 0.25, g = 1.0 }, { f = 0.5, g = 2.0 }]", ONE_BIN),
    );
    let one = tmp.path().join("one");
    let eight = tmp.path().join("eight");
    for (dir, n) in [(&one, "1"), (&eight, "8")] {
        let o = gup_lab(&["check", "--config", &cfg, "--out", dir.to_str().unwrap(), "--threads", n]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for f in ["reports.json", "reports.csv"] {
        assert_eq!(fs::read(one.join(f)).unwrap(), fs::read(eight.join(f)).unwrap());
    }
}

#[test]
fn zero_threads_rejected() {
    let o = gup_lab(&["check", "--threads", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[0.1]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN));
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = gup_lab(&[
        "check", "--config", &cfg, "--out", out.to_str().unwrap(), "--relations", "ROBERTSON",
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).starts_with("I/O error"));
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[0.1]", "[{ f = 0.5, g = 1.0 }]", ONE_BIN));
    let out = tmp.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_gup-lab"))
        .args(["check", "--config", &cfg, "--relations", "ROBERTSON"])
        .env("GUPLAB_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(out.join("reports.json").exists());
}
