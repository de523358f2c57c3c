use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn eitmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eitmem")).args(args).output().unwrap()
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    eitmem(&args)
}

fn manifest(out: &Path) -> Value {
    let p = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .expect("manifest written");
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_fails_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("empty.toml");
    fs::write(&cfg, "").unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "scenario = \"store\"\n[schedule]\nstorage_time = 100\n").unwrap();
    let o = run_config(&cfg, &tmp.path().join("out"), &[]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("storage_time") && e.contains("schedule"), "{e}");
}

#[test]
fn invalid_value_names_section() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "scenario = \"slowlight\"\n[medium]\noptical_depth = -3\n").unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("[medium]") && e.contains("optical_depth"), "{e}");
    assert!(!out.exists());
}

#[test]
fn missing_scenario_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "seed = 4\n").unwrap();
    let o = run_config(&cfg, &tmp.path().join("out"), &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("scenario"));
}

#[test]
fn store_is_deterministic_and_hits_operating_point() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_config(&configs().join("store.toml"), &a, &[]).status.success());
    assert!(run_config(&configs().join("store.toml"), &b, &[]).status.success());
    assert_eq!(listing(&a), listing(&b));

    let m = manifest(&a);
    let r = &m["results"];
    let eff = r["efficiency"].as_f64().unwrap();
    let bw = r["bandwidth_hz"].as_f64().unwrap();
    assert!((eff - 0.36).abs() <= 0.06, "{eff}");
    assert!((bw - 2.3e6).abs() <= 0.5e6, "{bw}");
    assert!(r["energy"]["closure_error"].as_f64().unwrap() < 5e-3);
    assert_eq!(m["complete"], Value::Bool(true));
    assert!(m["si"]["medium"]["optical_depth"].as_f64().unwrap() == 55.0);
}

#[test]
fn seed_changes_name_and_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("coincidence.toml");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run_config(&cfg, &a, &["--seed", "9"]).status.success());
    assert!(run_config(&cfg, &b, &["--seed", "9"]).status.success());
    assert!(run_config(&cfg, &c, &["--seed", "10"]).status.success());
    assert_eq!(listing(&a), listing(&b));
    let (la, lc) = (listing(&a), listing(&c));
    assert_ne!(la[0].0, lc[0].0);
    assert_ne!(la[0].1, lc[0].1);
    let g2 = manifest(&a)["results"]["g2"].as_f64().unwrap();
    assert!(g2 > 2.0, "{g2}");
}

#[test]
fn sweep_writes_one_row_per_xi() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&configs().join("sweep-xi.toml"), &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = listing(&out).into_iter().find(|(n, _)| n.ends_with(".csv")).unwrap().1;
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert!(lines[0].starts_with("xi,efficiency"));
    assert_eq!(manifest(&out)["results"]["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn failed_sweep_point_keeps_partial_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        "scenario = \"sweep-xi\"\n[grid]\ntime_start_ns = -150\ntime_end_ns = 350\n[sweep]\nxi = [1.0, 0.1]\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["complete"], Value::Bool(false));
    assert_eq!(m["results"]["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn scenario_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&configs().join("store.toml"), &out, &["--scenario", "slowlight"]);
    assert!(o.status.success());
    let m = manifest(&out);
    assert_eq!(m["scenario"], "slowlight");
    let eff = m["results"]["efficiency"].as_f64().unwrap();
    assert!((eff - 0.52).abs() <= 0.06, "{eff}");
}

#[test]
fn fits_read_relative_data_files() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("g2.csv"),
        "xi,g2,sigma\n0.72,5.21,0.2\n1,5.8,0.2\n2,7.0,0.2\n3.5,7.5,0.2\n5,7.4,0.2\n8.7,6.5,0.2\n12,5.5,0.2\n",
    )
    .unwrap();
    let cfg = tmp.path().join("g.toml");
    fs::write(&cfg, "scenario = \"fit-g2\"\n[fit_g2]\ndata = \"g2.csv\"\n").unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let x = manifest(&out)["results"]["argmax_xi"].as_f64().unwrap();
    assert!(x > 2.0 && x < 5.0, "{x}");

    let cfg = tmp.path().join("missing.toml");
    fs::write(&cfg, "scenario = \"fit-od\"\n[fit_od]\ndata = \"nope.csv\"\n").unwrap();
    let o = run_config(&cfg, &tmp.path().join("o2"), &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[fit_od]"));
}

#[test]
fn od_fit_recovers_optical_depth() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert!(run_config(&configs().join("fit-od.toml"), &out, &[]).status.success());
    let od = manifest(&out)["results"]["optical_depth"].as_f64().unwrap();
    assert!((od / 55.0 - 1.0).abs() < 0.05, "{od}");
}

#[test]
fn events_file_replaces_monte_carlo() {
    let tmp = tempfile::tempdir().unwrap();
    let mut ev = String::from("trigger_id,detection_time_ns\n");
    for k in 0..100u64 {
        ev.push_str(&format!("{k},{}\n", 702.5 + 5.0 * (k % 100) as f64));
    }
    for k in 0..40u64 {
        ev.push_str(&format!("{},{}\n", 100 + k, 987.0));
    }
    fs::write(tmp.path().join("ev.csv"), ev).unwrap();
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "scenario = \"coincidence\"\n[coincidence]\nwaveform = \"source\"\nevents = \"ev.csv\"\n").unwrap();
    let out = tmp.path().join("out");
    let o = run_config(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let g2 = manifest(&out)["results"]["g2"].as_f64().unwrap();
    assert_eq!(g2, 41.0);
}

#[test]
fn every_bundled_config_parses() {
    for e in fs::read_dir(configs()).unwrap() {
        let p = e.unwrap().path();
        let cfg = eitmem_cli::load(&p).unwrap();
        cfg.resolve().unwrap_or_else(|e| panic!("{}: {e:#}", p.display()));
        assert!(cfg.scenario.is_some());
    }
}
