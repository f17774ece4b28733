use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_crossfield"));
    c.env_remove("CROSSFIELD_THREADS");
    c
}

fn run(dir: &Path, toml: &str, args: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, toml).unwrap();
    let out = dir.join("out");
    let o = bin().args(args).arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    (o, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

/// Rows of a data file, without `#` comments and the column line.
fn rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const RESONANCE: &str = "[resonance]\nfields = [0.1555]\n";

#[test]
fn empty_seed_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), "[resonance]\nseeds = []\n", &["resonance"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("2:9"), "{}", stderr(&o));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn unknown_key_reports_its_location() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(dir.path(), "[model]\nfield = 0.1\nfeild = 0.2\n", &["resonance"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("3:1") && e.contains("feild"), "{e}");
}

#[test]
fn out_of_range_value_is_rejected_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), "[model]\nbinding_energy = 1.0\n", &["sweep"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("sweep.csv").exists());
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, RESONANCE).unwrap();
    let o = bin().env("CROSSFIELD_THREADS", "zero").arg("resonance").arg("--config").arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_hashes_every_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), RESONANCE, &["resonance"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["command"], "resonance");
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let table = rows(&out.join("resonance.csv"));
    assert_eq!(table.len(), 3, "one root per seed of level 3");
}

#[test]
fn rerun_from_manifest_reproduces_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), RESONANCE, &["resonance"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let again = dir.path().join("again");
    let o = bin().arg("resonance").arg("--config").arg(out.join("manifest.json")).arg("--out").arg(&again).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(out.join("resonance.csv")).unwrap(), std::fs::read(again.join("resonance.csv")).unwrap());
}

#[test]
fn transformed_sweep_is_the_root5_of_the_raw_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[sweep]\nstart = 0.02\nstop = 0.06\nstep = 0.01\n[sweep.stabilization]\nenabled = false\n";
    let (o, out) = run(dir.path(), cfg, &["sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = rows(&out.join("sweep.csv"));
    let tr = rows(&out.join("sweep_transformed.csv"));
    assert_eq!(raw.len(), 5);
    assert_eq!(raw.len(), tr.len());
    for (a, b) in raw.iter().zip(&tr) {
        assert_eq!(a[0], b[0]);
        assert_eq!(a[1], b[1]);
        let im: f64 = a[2].parse().unwrap();
        let t: f64 = b[2].parse().unwrap();
        assert!((t - im.signum() * im.abs().powf(0.2)).abs() <= 1e-8 * t.abs().max(1e-300));
    }
    assert!(!out.join("stabilization.csv").exists());
}

#[test]
fn vortex_free_window_gives_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[vortices]\nnx = 11\nny = 11\n[vortices.window]\nx_min = 1.6\nx_max = 2.4\ny_min = 1.5\ny_max = 2.5\n[circulation]\ncontours = 0\n";
    let (o, out) = run(dir.path(), cfg, &["vortices"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(rows(&out.join("vortices.csv")).is_empty());
    assert_eq!(manifest(&out)["tasks"][0]["results"]["count"], 0);
}

#[test]
fn quiver_samples_are_finite_or_masked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[quiver]\nnx = 7\nny = 7\nrender = false\n[quiver.window]\nx_min = -3.0\nx_max = 3.0\ny_min = -3.0\ny_max = 3.0\n";
    let (o, out) = run(dir.path(), cfg, &["quiver"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = rows(&out.join("quiver.csv"));
    assert_eq!(table.len(), 49);
    for r in table {
        let v: Vec<f64> = r.iter().map(|c| c.parse().unwrap()).collect();
        assert!(v[0].is_finite() && v[1].is_finite());
        if v[0].hypot(v[1]) > 0.1 {
            assert!(v[2..].iter().all(|x| x.is_finite()), "{r:?}");
        }
    }
}

#[test]
fn default_config_round_trips_through_the_parser() {
    let o = bin().arg("default-config").output().unwrap();
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[model]"));
    let (o, _) = run(dir.path(), &text, &["resonance"]);
    assert!(o.status.success(), "{}", stderr(&o));
}
