use std::path::Path;
use std::process::{Command, Output};

fn nucdecay(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nucdecay"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn files_with_prefix(dir: &Path, prefix: &str) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with(prefix))
        .collect();
    v.sort();
    v
}

fn header_value(text: &str, key: &str) -> Option<String> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find_map(|l| l.strip_prefix(&format!("{key}: ")).map(String::from))
}

#[test]
fn kscan_writes_hashed_csv_with_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = nucdecay(&["kscan", "--set", "kscan.points=200"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = files_with_prefix(dir.path(), "kscan_");
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(&files[0]).unwrap();
    let hash = header_value(&text, "config_hash").unwrap();
    assert_eq!(hash.len(), 64);
    assert!(files[0].to_string_lossy().ends_with(&format!("kscan_{}.csv", &hash[..8])));
    assert_eq!(header_value(&text, "convention_factor").as_deref(), Some("2"));
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "theta_in_rad,k_real_over_gamma,k_imag_over_gamma");
    assert_eq!(rows.len(), 201);
    // every number carries 17 significant digits
    assert!(rows[1].split(',').all(|c| c.split('e').next().unwrap().trim_start_matches('-').len() == 18));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], hash);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 1);
}

#[test]
fn kscan_without_radiative_coupling_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = nucdecay(&["kscan", "--set", "kscan.points=50", "--set", "decay.gamma0_over_rad=0"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(&files_with_prefix(dir.path(), "kscan_")[0]).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cells[1], 0.0);
        assert_eq!(cells[2], 0.0);
    }
}

#[test]
fn fixed_step_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "evolve",
        "--set",
        "evolve.model=both",
        "--set",
        "evolve.chain_length=200",
        "--set",
        "evolve.points=101",
        "--set",
        "evolve.t_end=2.0",
        "--set",
        "integrator.method=rk4",
        "--set",
        "integrator.step=0.005",
        "--jobs",
        "1",
    ];
    assert!(nucdecay(&args, a.path()).status.success());
    assert!(nucdecay(&args, b.path()).status.success());
    let fa = files_with_prefix(a.path(), "evolve_");
    let fb = files_with_prefix(b.path(), "evolve_");
    assert_eq!(fa.len(), 9);
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "schema_version = 1\n[excitation]\npulse_areas = [0.5]\n[evolve]\npoints = 51\nt_end = 1.0\n",
    )
    .unwrap();
    let out = nucdecay(
        &["evolve", "--config", cfg.to_str().unwrap(), "--set", "geometry.incidence_angle=0.22"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let files = files_with_prefix(dir.path(), "evolve_reduced_");
    assert_eq!(files.len(), 1);
    let text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(header_value(&text, "theta_in").as_deref(), Some("0.22"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 52);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| nucdecay(args, dir.path()).status.code();
    assert_eq!(code(&["kscan", "--set", "geometry.colour=1"]), Some(2));
    assert_eq!(code(&["kscan", "--set", "schema_version=7"]), Some(2));
    assert_eq!(code(&["kscan", "--config", "/nonexistent/run.toml"]), Some(2));
    assert_eq!(code(&["oracle-compare", "--set", "oracle.size=9"]), Some(4));
    assert_eq!(code(&["oracle-compare", "--set", "oracle.size=7", "--set", "oracle.cap=6"]), Some(4));
    assert_eq!(
        code(&["evolve", "--set", "integrator.max_steps=3", "--set", "excitation.pulse_areas=[0.5]"]),
        Some(3)
    );
}

#[test]
fn oracle_compare_reports_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let out = nucdecay(
        &["oracle-compare", "--set", "excitation.pulse_areas=[0.5]", "--set", "geometry.incidence_angle=0.05"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = files_with_prefix(dir.path(), "oracle_compare_")
        .into_iter()
        .find(|p| p.extension().unwrap() == "json")
        .unwrap();
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    let ratio = report["data"]["scaling_ratios"][0].as_f64().unwrap();
    assert!(ratio >= 10.0, "ratio {ratio}");
    assert!(report["data"]["runs"][0]["max_trace_error"].as_f64().unwrap() < 1e-10);
}

#[test]
fn single_nucleus_oracle_has_no_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let out = nucdecay(&["oracle-compare", "--set", "oracle.size=1", "--set", "oracle.scaling_check=false"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = files_with_prefix(dir.path(), "oracle_compare_")
        .into_iter()
        .find(|p| p.extension().unwrap() == "csv")
        .unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let dev: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(dev < 1e-10);
    }
}

#[test]
fn interfere_emits_traces_zoom_and_minima() {
    let dir = tempfile::tempdir().unwrap();
    let out = nucdecay(&["interfere", "--set", "interfere.points=1501", "--set", "interfere.t_end=3.0"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files_with_prefix(dir.path(), "interfere_minima_").len(), 4);
    assert_eq!(files_with_prefix(dir.path(), "interfere_zoom_").len(), 4);
    let summary = std::fs::read_to_string(&files_with_prefix(dir.path(), "interfere_first_minima_")[0]).unwrap();
    let firsts: Vec<f64> = summary
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(firsts.len(), 4);
    assert!(firsts.windows(2).all(|w| w[1] < w[0]));
    let minima = std::fs::read_to_string(&files_with_prefix(dir.path(), "interfere_minima_a0.5pi")[0]).unwrap();
    assert!(minima.lines().any(|l| l == "index,t_min_over_Gamma,t_min_ns,intensity_min"));
}

#[test]
fn finite_size_small_scan() {
    let dir = tempfile::tempdir().unwrap();
    let out = nucdecay(
        &[
            "finite-size",
            "--set",
            "finite_size.min_length=50",
            "--set",
            "finite_size.max_length=120",
            "--set",
            "finite_size.profile_length=60",
            "--set",
            "excitation.pulse_areas=[0.00001, 0.5]",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for prefix in ["k_convergence_", "k_site_profile_", "deviation_", "extrema_", "phase_compare_n"] {
        assert!(!files_with_prefix(dir.path(), prefix).is_empty(), "{prefix}");
    }
    let dev = std::fs::read_to_string(&files_with_prefix(dir.path(), "deviation_")[0]).unwrap();
    assert_eq!(dev.lines().filter(|l| !l.starts_with('#')).count(), 72);
}

#[test]
fn show_config_prints_resolved_toml() {
    let out = Command::new(env!("CARGO_BIN_EXE_nucdecay"))
        .args(["show-config", "--set", "evolve.chain_length=10"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("chain_length = 10"));
    assert!(text.starts_with("# config_hash: "));
}
