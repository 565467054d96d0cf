//! Acceptance gate: criteria 1–10 at full budget through the core
//! verification suite, criterion 11 through the binary. One line per
//! criterion; nonzero exit if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use hibler_core::verify::{run_criterion, runtime_limit, Budget};

const SEED: u64 = 20240601;

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("output dir") {
        let path = entry.expect("dir entry").path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, fs::read(&path).expect("read csv"));
        }
    }
    out
}

fn run_hibler(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_hibler"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?} exited with {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr).trim()
        ))
    }
}

/// Runs every file-emitting subcommand twice with the same config and
/// compares the CSV bytes.
fn reproducibility() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for cmd in ["symbol", "ls-check", "spectrum", "decay", "simulate"] {
        let out = tmp.path().join(cmd);
        let cfg = tmp.path().join(format!("{cmd}.cfg"));
        fs::write(
            &cfg,
            format!(
                "experiment.output_dir = \"{}\"\nexperiment.seed = 17\nexperiment.n_samples = 200\n\
                 grid.nx = 11\ngrid.ny = 9\nstepper.t_end = 0.2\nforcing.wind_x = 3\nrheology.c_cor = 0.5\n",
                out.display()
            ),
        )
        .map_err(|e| e.to_string())?;
        let cfg = cfg.to_string_lossy().into_owned();
        run_hibler(&[cmd, &cfg])?;
        let first = csv_bytes(&out);
        fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        run_hibler(&[cmd, &cfg])?;
        let second = csv_bytes(&out);
        if first.is_empty() {
            return Err(format!("{cmd} wrote no CSV"));
        }
        if first != second {
            return Err(format!("{cmd}: CSV bytes differ between runs"));
        }
        compared += first.len();
    }
    Ok(format!("5 subcommands, {compared} CSV files byte-identical"))
}

fn main() -> ExitCode {
    let budget = Budget::full();
    let mut all = true;
    for id in 1..=10 {
        let c = run_criterion(id, &budget, SEED);
        let limit = runtime_limit(id);
        let in_time = c.elapsed <= limit;
        let ok = c.passed && in_time;
        all &= ok;
        println!(
            "criterion {id:>2} {}: {} ({:.2} s, limit {} s){}",
            if ok { "PASS" } else { "FAIL" },
            c.name,
            c.elapsed.as_secs_f64(),
            limit.as_secs(),
            if ok { String::new() } else { format!(" [{}]", c.detail) },
        );
        println!("             {}", c.detail);
    }
    let start = Instant::now();
    let rep = reproducibility();
    let ok = rep.is_ok();
    all &= ok;
    println!(
        "criterion 11 {}: reproducibility ({:.2} s)",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    println!("             {}", rep.unwrap_or_else(|e| e));
    if all {
        println!("acceptance: 11/11 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
