use std::path::Path;
use std::process::{Command, Output};

use fput_core::io::{read_column, read_csv};

fn fput(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fput"))
        .args(args)
        .env("FPUT_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn profile_residual_column_is_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = fput(&["profile", "--c", "1.015"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let res = read_column(dir.path().join("profile/profile.csv"), "residual").unwrap();
    assert!(res.iter().all(|v| v.abs() <= 1e-9));
    // The speed derivative of an amplitude-increasing family is positive at the crest.
    let x = read_column(dir.path().join("profile/profile.csv"), "x").unwrap();
    let dc_r = read_column(dir.path().join("profile/profile.csv"), "dc_r").unwrap();
    let crest = x.iter().position(|&v| v == 0.0).unwrap();
    assert!(dc_r[crest] > 0.0);
    let text = std::fs::read_to_string(dir.path().join("profile/manifest.txt")).unwrap();
    assert!(text.contains("command = profile") && text.contains("c = 1.015"));
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = fput(&["profile", "--speed", "1.02"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("fput-error code=2 class=config"), "{}", stderr(&o));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "c = 1.02\nspeed = 3\n").unwrap();
    let o = fput(&["profile", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.cfg:2") && stderr(&o).contains("speed"), "{}", stderr(&o));

    let o = fput(&["fit", "--sigma", "0.9"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn flags_override_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("a.cfg");
    std::fs::write(&cfg, "# speed sweep\nc = 1.02\n").unwrap();
    let o = fput(&["profile", "--config", cfg.to_str().unwrap(), "--c", "1.01"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let c = read_column(dir.path().join("profile/summary.csv"), "c").unwrap();
    assert_eq!(c, vec![1.01]);
}

#[test]
fn manifest_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = fput(
        &["ensemble", "--realizations", "3", "--t-end", "6", "--stride", "20", "--out", first.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // Point the manifest at a second directory and rerun from it alone.
    let text = std::fs::read_to_string(first.join("manifest.txt")).unwrap();
    let second = dir.path().join("second");
    let text = text.replace(&format!("out = {}", first.display()), &format!("out = {}", second.display()));
    let manifest = dir.path().join("rerun.cfg");
    std::fs::write(&manifest, text).unwrap();
    let o = fput(&["ensemble", "--threads", "1", "--config", manifest.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let a = std::fs::read(first.join("stats.csv")).unwrap();
    let b = std::fs::read(second.join("stats.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn simulate_writes_requested_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = fput(
        &["simulate", "--sigma", "0.07", "--c", "1.015", "--t-end", "1200", "--snapshots", "0,40,1200"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for t in ["0", "40", "1200"] {
        let (header, rows) = read_csv(dir.path().join(format!("simulate/snapshot_t{t}.csv"))).unwrap();
        assert_eq!(header, vec!["j", "r", "p"]);
        assert!(rows.len() > 2400);
    }
    let drift = read_column(dir.path().join("simulate/energy.csv"), "relative_drift").unwrap();
    assert!(drift.iter().all(|d| d.abs() < 1e-6));
}

#[test]
fn rate_table_is_negative_for_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = fput(&["rate", "--variant", "both", "--c-grid", "8"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(dir.path().join("rate/rate.csv")).unwrap();
    let k = header.iter().position(|h| h == "Q_c").unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows.iter().all(|r| r[k].parse::<f64>().unwrap() < 0.0));

    let table = dir.path().join("rate/rate.csv");
    let o = fput(&["limit-ode", "--rate-table", table.to_str().unwrap(), "--tau-end", "10", "--stride", "1000"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(dir.path().join("limit-ode/limit_ode.csv")).unwrap();
    assert_eq!(header, vec!["tau", "c_lim", "c_lim_h"]);
    assert_eq!(rows.len(), 11);
    let c: Vec<f64> = read_column(dir.path().join("limit-ode/limit_ode.csv"), "c_lim").unwrap();
    assert!(c.windows(2).all(|w| w[1] < w[0]) && c[0] == 1.015);
}

#[test]
fn modulation_and_expansion_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = fput(&["modulate", "--t-end", "10", "--compare-fit", "true"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, _) = read_csv(dir.path().join("modulate/modulation.csv")).unwrap();
    assert_eq!(&header[..8], ["t", "gamma", "c", "xi", "eta_l2", "eta_weighted_l2", "ortho_resid_1", "ortho_resid_2"]);
    let c = read_column(dir.path().join("modulate/modulation.csv"), "c").unwrap();
    let c_fit = read_column(dir.path().join("modulate/modulation.csv"), "c_fit").unwrap();
    assert!(c.iter().zip(&c_fit).all(|(a, b)| (a - b).abs() < 1e-6));

    let o = fput(&["expand", "--t-end", "20"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(dir.path().join("expand/expansion.csv")).unwrap();
    assert_eq!(&header[..7], ["t", "c1", "gamma1_I", "gamma1_II", "gamma2", "c2", "variant"]);
    assert!(rows.iter().all(|r| r[6] == "full"));
}
