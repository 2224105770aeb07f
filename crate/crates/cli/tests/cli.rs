use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: [&str; 4] = ["--set", "truncation.storage=4", "--set", "truncation.cooling=8"];

fn fockstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fockstab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn small_sweep(dir: &Path, extra: &[&str]) -> Output {
    let mut args: Vec<&str> = SMALL.to_vec();
    args.extend([
        "--set",
        r#"sweep.amplitude={"kind":"nbar","values":[0,1]}"#,
        "--set",
        "sweep.delta_over_chi=[0,1]",
        "--out",
        dir.to_str().unwrap(),
    ]);
    args.extend(extra);
    args.push("steady-sweep");
    fockstab(&args)
}

#[test]
fn steady_sweep_writes_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out = small_sweep(tmp.path(), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let (header, rows) = csv_rows(&tmp.path().join("sweep.csv"));
    assert_eq!(header, "omega_c_amp,delta_over_chi,p,p0,p1,p2,p3,mean_n_cooling,converged_flag,runtime");
    assert_eq!(rows.len(), 4);
    for r in &rows {
        let f: Vec<f64> = r[..8].iter().map(|x| x.parse().unwrap()).collect();
        assert_eq!(r[8], "true");
        assert!((f[2] - (f[3] - f[4]) / (f[3] + f[4])).abs() < 1e-12);
        assert!(f[3] + f[4] + f[5] + f[6] <= 1.0 + 1e-8);
    }
    // the one-photon resonance inverts, the zero-photon one locks to |0⟩
    let p = |i: usize| rows[i][2].parse::<f64>().unwrap();
    assert!(p(3) < -0.2);
    assert!(p(2) > 0.4);

    let meta = read_json(&tmp.path().join("sweep.json"));
    assert_eq!(meta["library"], "fockstab");
    assert!(meta["version"].is_string());
    assert_eq!(meta["units"]["drive_amplitudes"].as_str().unwrap().split(' ').next(), Some("rad/us"));
    assert_eq!(meta["config"]["truncation"]["cooling"], 8);
    assert_eq!(meta["failed_points"], 0);
}

#[test]
fn sweep_is_deterministic_and_parallel_matches_serial() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_sweep(a.path(), &["--jobs", "1"])), 0);
    assert_eq!(code(&small_sweep(b.path(), &["--jobs", "3"])), 0);
    let (_, ra) = csv_rows(&a.path().join("sweep.csv"));
    let (_, rb) = csv_rows(&b.path().join("sweep.csv"));
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x[..9], y[..9]);
    }
}

#[test]
fn undriven_storage_is_near_unpolarized_under_saturating_drive() {
    // Ω_C = 0 leaves a saturated storage two-level drive: p ≈ 0
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&[
        "--set",
        "truncation.storage=4",
        "--set",
        "truncation.cooling=3",
        "--set",
        r#"sweep.amplitude={"kind":"raw","values":[0]}"#,
        "--set",
        "sweep.delta_over_chi=[1]",
        "--out",
        tmp.path().to_str().unwrap(),
        "steady-sweep",
    ]);
    assert_eq!(code(&out), 0);
    let (_, rows) = csv_rows(&tmp.path().join("sweep.csv"));
    let p: f64 = rows[0][2].parse().unwrap();
    assert!(p.abs() < 0.05, "p = {p}");
}

#[test]
fn all_points_failing_is_a_solver_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&[
        "--set",
        "params.kappa_s=0",
        "--set",
        "params.kappa_c=0",
        "--set",
        "truncation.storage=3",
        "--set",
        "truncation.cooling=3",
        "--set",
        r#"sweep.amplitude={"kind":"raw","values":[0]}"#,
        "--set",
        "sweep.delta_over_chi=[1]",
        "--out",
        tmp.path().to_str().unwrap(),
        "steady-sweep",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"truncation": {"storage": 1}}"#).unwrap();
    assert_eq!(code(&fockstab(&["--config", bad.to_str().unwrap(), "show-config"])), 1);
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&fockstab(&["--config", bad.to_str().unwrap(), "show-config"])), 1);
    let missing = tmp.path().join("missing.json");
    assert_eq!(code(&fockstab(&["--config", missing.to_str().unwrap(), "show-config"])), 1);
    assert_eq!(code(&fockstab(&["--set", "no_such_field=3", "show-config"])), 1);
    assert_eq!(code(&fockstab(&["--set", "params.omega_x=3", "show-config"])), 1);
    assert_eq!(code(&fockstab(&["--set", "truncation.storage", "show-config"])), 1);
    assert_eq!(code(&fockstab(&["--jobs", "0", "show-config"])), 1);
    assert_eq!(code(&fockstab(&["rate-model", "--kappa", "1", "--kappa-down", "-1"])), 1);
    assert_eq!(code(&fockstab(&["time-evolve", "--duration", "-1"])), 1);
    assert_eq!(code(&fockstab(&["no-such-command"])), 1);
    assert_eq!(code(&fockstab(&["--help"])), 0);
}

#[test]
fn show_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&["--preset", "spectroscopy", "--set", "truncation.cooling=9", "show-config"]);
    assert_eq!(code(&out), 0);
    let first: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(first["preset"], "spectroscopy");
    let path = tmp.path().join("cfg.json");
    std::fs::write(&path, stdout(&out)).unwrap();
    let again = fockstab(&["--config", path.to_str().unwrap(), "show-config"]);
    let second: Value = serde_json::from_str(&stdout(&again)).unwrap();
    assert_eq!(first, second);
}

#[test]
fn zero_duration_trajectory_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["--out", tmp.path().to_str().unwrap(), "time-evolve", "--duration", "0"]);
    assert_eq!(code(&fockstab(&args)), 0);
    let (header, rows) = csv_rows(&tmp.path().join("trajectory.csv"));
    assert_eq!(header, "time,time_kappa_c,p,p0,p1,p2,p3,mean_n_storage,mean_n_cooling");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3], "1");
}

#[test]
fn undriven_single_photon_decays_exponentially() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend([
        "--set",
        "storage_drive_over_kappa_c=0",
        "--set",
        "cooling_nbar=0",
        "--set",
        "evolve.initial=[1,0]",
        "--out",
        tmp.path().to_str().unwrap(),
        "time-evolve",
        "--samples",
        "21",
    ]);
    assert_eq!(code(&fockstab(&args)), 0);
    let meta = read_json(&tmp.path().join("trajectory.json"));
    let kappa_s = meta["derived"]["kappa_s_rad_per_us"].as_f64().unwrap();
    let (_, rows) = csv_rows(&tmp.path().join("trajectory.csv"));
    assert_eq!(rows.len(), 21);
    for r in &rows {
        let t: f64 = r[0].parse().unwrap();
        let p1: f64 = r[4].parse().unwrap();
        assert!((p1 - (-kappa_s * t).exp()).abs() < 1e-6, "t = {t}: {p1}");
    }
}

#[test]
fn wigner_exports_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&[
        "--set",
        "truncation.cooling=10",
        "--set",
        r#"tomography.grid={"re_min":-2,"re_max":2,"im_min":-2,"im_max":2,"n_re":5,"n_im":5}"#,
        "--out",
        tmp.path().to_str().unwrap(),
        "wigner",
    ]);
    assert_eq!(code(&out), 0);
    for stem in ["q0", "q1", "q2", "q3", "wigner_from_q", "wigner_direct", "truncation_bound"] {
        let (header, rows) = csv_rows(&tmp.path().join(format!("{stem}.csv")));
        assert_eq!(header, "re,im,value");
        assert_eq!(rows.len(), 25);
        assert!(tmp.path().join(format!("{stem}.json")).exists());
    }
    let meta = read_json(&tmp.path().join("tomography.json"));
    assert!(meta["wigner_origin"].as_f64().unwrap() < -0.05);
}

#[test]
fn rate_model_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&[
        "--out",
        tmp.path().to_str().unwrap(),
        "rate-model",
        "--kappa",
        "1",
        "--kappa-down",
        &(1.0f64 / 300.0).to_string(),
        "--omega-ab",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((report["equilibrium_p1"].as_f64().unwrap() - 0.99).abs() < 1e-3);
    assert_eq!(report["omega_ab_optimized"], false);
    assert_eq!(read_json(&tmp.path().join("rate_model.json")), report);

    let out = fockstab(&["--out", tmp.path().to_str().unwrap(), "rate-model", "--kappa", "1", "--kappa-down", "0.01"]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["omega_ab_optimized"], true);
    let w = report["omega_ab"].as_f64().unwrap();
    assert!(w > 0.5 && w < 2.0, "{w}");

    let out = fockstab(&[
        "--out",
        tmp.path().to_str().unwrap(),
        "rate-model",
        "--kappa",
        "1",
        "--kappa-down",
        "0.01",
        "--omega-ab",
        "1",
        "--bidirectional",
    ]);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["drive_model"], "bidirectional");
}

#[test]
fn convergence_failure_exits_3_with_recommendation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&[
        "--set",
        "truncation.storage=2",
        "--set",
        "truncation.cooling=10",
        "--set",
        "convergence.max_rounds=1",
        "--out",
        tmp.path().to_str().unwrap(),
        "check-convergence",
    ]);
    assert_eq!(code(&out), 3);
    let meta = read_json(&tmp.path().join("convergence.json"));
    assert_eq!(meta["report"]["passed"], false);
    assert!(meta["report"]["rounds"][0]["storage_tail"].as_f64().unwrap() > 1e-3);
    assert_eq!(meta["report"]["recommended"]["storage"], 4);
}

#[test]
fn default_truncation_passes_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&["--out", tmp.path().to_str().unwrap(), "check-convergence"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let meta = read_json(&tmp.path().join("convergence.json"));
    assert_eq!(meta["report"]["passed"], true);
}

#[test]
fn spectrum_resolves_photon_number_peaks() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fockstab(&[
        "--preset",
        "spectroscopy",
        "--set",
        "spectrum.points=601",
        "--out",
        tmp.path().to_str().unwrap(),
        "spectrum",
    ]);
    assert_eq!(code(&out), 0);
    let (header, rows) = csv_rows(&tmp.path().join("spectrum.csv"));
    assert_eq!(header, "detuning,response");
    assert_eq!(rows.len(), 601);
    let meta = read_json(&tmp.path().join("spectrum.json"));
    let peaks = meta["peaks"].as_array().unwrap();
    assert!(peaks.len() >= 3);
    let d: Vec<f64> = peaks.iter().map(|p| p["detuning"].as_f64().unwrap()).collect();
    for w in d.windows(2) {
        assert!(((w[1] - w[0]) / 2.59e6 - 1.0).abs() < 0.05);
    }
}
