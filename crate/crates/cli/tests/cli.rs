use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dyecav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dyecav")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

const SMALL_ENSEMBLE: &str = r#"
[ensemble]
disorder = [0.01]
disorder_etas = [1.0]
realizations = 4
"#;

#[test]
fn print_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dyecav(&["modes", "--print-config"]);
    assert_eq!(code(&out), 0);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, &out.stdout).unwrap();
    let again = dyecav(&["modes", "--config", path(&cfg), "--print-config"]);
    assert_eq!(again.stdout, out.stdout);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("[lattice]") && text.contains("[ensemble]"));
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[observables]\nquantile = 0.9\n").unwrap();
    let out = dyecav(&["evolve", "--config", path(&cfg), "--quantile", "0.95", "--seed", "17", "--t-final", "30", "--print-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("quantile = 0.95"));
    assert!(text.contains("seed = 17") && text.contains("seed_base = 17"));
    assert!(text.contains("t_final = 30.0"));
}

#[test]
fn unknown_keys_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[lattice]\nnum_well = 3\n").unwrap();
    let out = dyecav(&["modes", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("num_well"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn bad_values_are_validation_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let out = dyecav(&["modes", "--quantile", "1.5", "--out", path(tmp.path())]);
    assert_eq!(code(&out), 2);
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[lattice]\nwell_width = 0.6\n").unwrap();
    assert_eq!(code(&dyecav(&["modes", "--config", path(&cfg), "--out", path(tmp.path())])), 2);
}

#[test]
fn missing_config_is_an_io_error() {
    let out = dyecav(&["modes", "--config", "/nonexistent/cfg.toml"]);
    assert_eq!(code(&out), 4);
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("file");
    fs::write(&file, "").unwrap();
    let out = dyecav(&["modes", "--out", path(&file.join("sub"))]);
    assert_eq!(code(&out), 4);
}

#[test]
fn unconverged_evolve_keeps_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[dynamics]\nt_max = 25.0\n").unwrap();
    let dir = tmp.path().join("o");
    let out = dyecav(&["evolve", "--config", path(&cfg), "--out", path(&dir)]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trajectory.csv", "transport.csv", "density_frames.csv", "steady_state.json"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let m = manifest(&dir);
    assert!(m["status"].as_str().unwrap().contains("no steady state"));
    let state: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("steady_state.json")).unwrap()).unwrap();
    assert_eq!(state["converged"], false);
}

#[test]
fn evolve_writes_the_documented_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("o");
    let out = dyecav(&["evolve", "--out", path(&dir)]);
    assert_eq!(code(&out), 0);
    let traj = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,n_0,"));
    let frames = fs::read_to_string(dir.join("density_frames.csv")).unwrap();
    assert!(frames.starts_with("t,x,I\n"));
    assert_eq!(frames.lines().count(), 1 + 21 * 2048);
    let m = manifest(&dir);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["command"], "evolve");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 5);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn manifest_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&dyecav(&["modes", "--seed", "5", "--out", path(&a)])), 0);
    assert_eq!(code(&dyecav(&["modes", "--config", path(&a.join("manifest.json")), "--out", path(&b)])), 0);
    for f in ["potential.csv", "modes.csv", "modes_summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest(&a)["outputs"], manifest(&b)["outputs"]);
}

#[test]
fn disordered_run_records_its_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[lattice]\nbias_step = 0.0\ndisorder = 0.01\n").unwrap();
    let dir = tmp.path().join("o");
    assert_eq!(code(&dyecav(&["modes", "--config", path(&cfg), "--seed", "42", "--out", path(&dir)])), 0);
    assert_eq!(manifest(&dir)["seeds"], serde_json::json!([42]));
}

#[test]
fn manifest_of_another_command_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(code(&dyecav(&["modes", "--out", path(&a)])), 0);
    let out = dyecav(&["evolve", "--config", path(&a.join("manifest.json")), "--out", path(&tmp.path().join("b"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ensemble_resumes_from_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, SMALL_ENSEMBLE).unwrap();
    let dir = tmp.path().join("o");
    assert_eq!(code(&dyecav(&["ensemble", "--config", path(&cfg), "--out", path(&dir)])), 0);
    let raw = fs::read_to_string(dir.join("ensemble_raw.csv")).unwrap();
    let summary = fs::read(dir.join("ensemble_summary.csv")).unwrap();
    assert_eq!(raw.lines().count(), 5);
    assert!(raw.starts_with("disorder,eta,index,seed,sigma_m,x_m,v_wf,flux_imbalance,error\n"));

    // drop two realizations, as after an interrupted run, and mark one kept row
    let lines: Vec<&str> = raw.lines().collect();
    let mut kept: Vec<String> = lines[..3].iter().map(|s| s.to_string()).collect();
    let mut cols: Vec<String> = kept[1].split(',').map(String::from).collect();
    cols[4] = "0.25".into();
    kept[1] = cols.join(",");
    fs::write(dir.join("ensemble_raw.csv"), kept.join("\n") + "\n").unwrap();

    assert_eq!(code(&dyecav(&["ensemble", "--config", path(&cfg), "--out", path(&dir)])), 0);
    let resumed = fs::read_to_string(dir.join("ensemble_raw.csv")).unwrap();
    assert_eq!(resumed.lines().count(), 5);
    // the marked row was reused rather than recomputed
    assert!(resumed.lines().nth(1).unwrap().contains(",0.25,"));
    assert_eq!(resumed.lines().skip(2).collect::<Vec<_>>(), lines[2..].to_vec());

    // the worker count is not part of the configuration
    fs::write(dir.join("ensemble_raw.csv"), kept.join("\n") + "\n").unwrap();
    assert_eq!(code(&dyecav(&["ensemble", "--config", path(&cfg), "--workers", "1", "--out", path(&dir)])), 0);
    let fresh = fs::read_to_string(dir.join("ensemble_raw.csv")).unwrap();
    assert!(fresh.lines().nth(1).unwrap().contains(",0.25,"), "worker count must not change the config hash");

    // a different configuration starts from scratch
    let cfg2 = tmp.path().join("cfg2.toml");
    fs::write(&cfg2, SMALL_ENSEMBLE.replace("realizations = 4", "realizations = 4\nseed_base = 7")).unwrap();
    fs::write(dir.join("ensemble_raw.csv"), kept.join("\n") + "\n").unwrap();
    assert_eq!(code(&dyecav(&["ensemble", "--config", path(&cfg2), "--out", path(&dir)])), 0);
    let other = fs::read_to_string(dir.join("ensemble_raw.csv")).unwrap();
    assert!(!other.contains(",0.25,"));
    assert_ne!(fs::read(dir.join("ensemble_summary.csv")).unwrap(), summary);
}

#[test]
fn boundary_writes_curves_per_source() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.toml");
    fs::write(&cfg, "[ensemble]\netas = [0.01, 1.0, 30.0]\npumps = [0.03]\n\n[effective]\nn_s = 50000.0\nnn_overlap = 0.1\n").unwrap();
    let dir = tmp.path().join("o");
    let out = dyecav(&["boundary", "--config", path(&cfg), "--out", path(&dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("boundary.csv")).unwrap();
    assert!(text.starts_with("source,overlap,pump,eta_critical\n"));
    for src in ["simulation,", "effective_measured,", "effective,0.01,", "effective,0.33,"] {
        assert!(text.contains(src), "{src}");
    }
    let map = fs::read_to_string(dir.join("phase_map.csv")).unwrap();
    assert_eq!(map.lines().count(), 4);
}
