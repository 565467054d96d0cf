use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hibler_cli::config::parse_config;
use hibler_core::output::read_snapshot;

fn hibler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hibler"))
        .args(args)
        .output()
        .expect("spawn hibler")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let out = dir.join(format!("{name}_out"));
    let path = dir.join(format!("{name}.cfg"));
    fs::write(
        &path,
        format!("experiment.output_dir = \"{}\"\n{body}", out.display()),
    )
    .unwrap();
    path
}

fn manifest_files(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    text.lines()
        .filter_map(|l| l.split_once(" = "))
        .filter(|(k, _)| k.starts_with("file.") && k.ends_with(".name"))
        .map(|(_, v)| v.to_string())
        .collect()
}

fn dir_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn manifest_lists_every_file_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sim",
        "grid.nx = 9\ngrid.ny = 7\nstepper.t_end = 0.05\nexperiment.snapshot_every = 2\n\
         experiment.heatmaps = true\nforcing.wind_y = 2\n",
    );
    let out = hibler(&["simulate", "--export-matrix", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("sim_out");
    let mut listed = manifest_files(&dir);
    listed.sort();
    assert_eq!(listed, dir_files(&dir));
    assert!(listed.contains(&"implicit_operator.coo".to_string()));
    assert!(listed.contains(&"snapshot_000005.bin".to_string()));

    // the echoed config parses back to the run configuration
    let text = fs::read_to_string(dir.join("manifest.txt")).unwrap();
    let echo: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("config."))
        .map(|l| format!("{l}\n"))
        .collect();
    let original = parse_config(&fs::read_to_string(&cfg).unwrap()).unwrap();
    assert_eq!(parse_config(&echo).unwrap(), original);

    let snap = read_snapshot(std::io::BufReader::new(
        fs::File::open(dir.join("snapshot_000005.bin")).unwrap(),
    ))
    .unwrap();
    assert_eq!((snap.nx, snap.ny), (9, 7));
    assert!((snap.t - 0.05).abs() < 1e-15);
    assert!(snap.fields[2].iter().all(|h| *h > 0.9));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let neg = write_config(tmp.path(), "neg", "experiment.lambda_re_min = -0.5\n");
    assert_eq!(hibler(&["ls-check", neg.to_str().unwrap()]).status.code(), Some(2));

    let big = write_config(tmp.path(), "big", "grid.nx = 75\ngrid.ny = 75\n");
    let out = hibler(&["spectrum", big.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));

    let bad = write_config(tmp.path(), "bad", "grid.nx = 2\n");
    let out = hibler(&["symbol", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid.nx"));

    let unknown = write_config(tmp.path(), "unknown", "\nrheology.ee = 2\n");
    let out = hibler(&["decay", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    assert_eq!(hibler(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hibler(&["symbol"]).status.code(), Some(2));
    assert_eq!(hibler(&["--help"]).status.code(), Some(0));

    let ok = write_config(tmp.path(), "ok", "experiment.n_samples = 50\n");
    assert_eq!(hibler(&["ls-check", ok.to_str().unwrap()]).status.code(), Some(0));
}

#[test]
fn too_short_decay_run_fails() {
    // a run this short leaves too few samples for the fit
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "coarse",
        "stepper.dt = 0.004\nexperiment.decades = 0.1\n",
    );
    let out = hibler(&["decay", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn spectrum_reports_two_dimensional_kernel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "eig", "grid.nx = 9\ngrid.ny = 9\n");
    let out = hibler(&["spectrum", "--export-matrix", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dir = tmp.path().join("eig_out");
    let summary = fs::read_to_string(dir.join("spectrum.txt")).unwrap();
    assert!(summary.contains("kernel_dim = 2\n"));
    let csv = fs::read_to_string(dir.join("eigenvalues.csv")).unwrap();
    // interior velocity unknowns plus all h and a nodes
    assert_eq!(csv.lines().count(), 1 + 2 * 49 + 2 * 81);
    let coo = fs::read_to_string(dir.join("linearisation.coo")).unwrap();
    for line in coo.lines().take(20) {
        let parts: Vec<&str> = line.split(' ').collect();
        assert_eq!(parts.len(), 3);
        let v: f64 = parts[2].parse().unwrap();
        // 17 significant digits round-trip
        assert_eq!(format!("{v:.16e}"), parts[2]);
    }
}

#[test]
fn selftest_passes() {
    let out = hibler(&["selftest"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 10);
}
