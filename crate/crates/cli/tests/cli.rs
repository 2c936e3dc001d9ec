//! End-to-end runs of the binary: exit codes, artifact files, provenance
//! stamps, and override handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sfwm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfwm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn modes_lists_guided_content_per_wavelength() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["modes", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let pump_line = text.lines().find(|l| l.contains("1064.0 nm")).unwrap();
    assert!(pump_line.contains("LP01") && pump_line.contains("LP11"));
    let idler_line = text.lines().find(|l| l.contains("1490.0 nm")).unwrap();
    assert!(idler_line.contains("LP01") && !idler_line.contains("LP11"));

    let csv = fs::read_to_string(out_dir.join("modes.csv")).unwrap();
    assert!(csv.starts_with("# artifact_version:"));
    assert!(csv.contains("config_sha256:"));
    assert!(csv.contains("wavelength_nm,mode,n_eff_fast,n_eff_slow"));
}

#[test]
fn modes_with_empty_wavelength_list_writes_header_only_table() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[modes]\nwavelengths_nm = []\n");
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["modes", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let csv = fs::read_to_string(out_dir.join("modes.csv")).unwrap();
    let data_rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 1, "expected only the column header:\n{csv}");
}

#[test]
fn malformed_mode_label_is_rejected_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[[process]]\nlabel = \"p\"\nsignal = \"LP9x\"\n",
    );
    let out = sfwm(&["modes", "--config", &config]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(
        err.contains("process 'p'") && err.contains("signal"),
        "stderr should name the offending field: {err}"
    );
}

#[test]
fn phasematch_reports_calibrated_solutions_as_json() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["phasematch", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));

    let payload: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("phasematch.json")).unwrap())
            .unwrap();
    assert!(payload["config_sha256"].as_str().unwrap().len() == 64);
    let processes = payload["processes"].as_array().unwrap();
    let p1 = &processes[0];
    assert_eq!(p1["label"], "process-1");
    let sol = p1["solutions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["signal_is_nir"].as_bool().unwrap())
        .expect("near-infrared branch");
    assert!((sol["signal_nm"].as_f64().unwrap() - 830.0).abs() < 10.0);
    assert!((sol["idler_nm"].as_f64().unwrap() - 1490.0).abs() < 10.0);
}

#[test]
fn phasematch_with_zero_birefringence_warns_and_exits_cleanly() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[fiber]\ndelta_n = 0.0\n");
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["phasematch", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "warnings must not change the exit code");
    assert!(stderr(&out).contains("warning"));
    let payload: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("phasematch.json")).unwrap())
            .unwrap();
    for p in payload["processes"].as_array().unwrap() {
        assert!(p["solutions"].as_array().unwrap().is_empty());
    }
}

#[test]
fn specifying_birefringence_twice_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[fiber]\ndelta_n = 3e-4\n[fiber.calibration]\nsignal_nm = 830.0\nidler_nm = 1490.0\n",
    );
    let out = sfwm(&["phasematch", "--config", &config]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("fiber.delta_n"));
}

#[test]
fn jsi_writes_grid_marginals_and_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[grid]\nn_signal = 16\nn_idler = 16\n");
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["jsi", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for name in [
        "jsi-process-1.csv",
        "jsi-process-1.bin",
        "jsi-process-1.bin.json",
        "marginal-signal-process-1.csv",
        "marginal-idler-process-1.csv",
        "schmidt-process-1.json",
    ] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("schmidt-process-1.json")).unwrap())
            .unwrap();
    assert!(report["schmidt_number"].as_f64().unwrap() >= 1.0);
}

#[test]
fn jsi_with_unknown_process_label_fails_listing_known_ones() {
    let out = sfwm(&["jsi", "--process", "nope"]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("nope") && err.contains("process-1"), "stderr: {err}");
}

#[test]
fn longer_fiber_narrows_the_phase_matching_bandwidth_five_fold() {
    let tmp = TempDir::new().unwrap();
    let short = tmp.path().join("short");
    let long = tmp.path().join("long");
    let config = write_config(
        tmp.path(),
        "[fiber]\nlength_m = 5.0\n[fiber.calibration]\nsignal_nm = 830.0\nidler_nm = 1490.0\n",
    );

    let fwhm = |dir: &Path, extra: &[&str]| -> f64 {
        let mut args = vec!["jsi", "--out", dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        let out = sfwm(&args);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
        let report: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.join("schmidt-process-1.json")).unwrap(),
        )
        .unwrap();
        report["phase_matching_fwhm_nm"].as_f64().unwrap()
    };
    let bw1 = fwhm(&short, &[]);
    let bw5 = fwhm(&long, &["--config", &config]);
    let ratio = bw1 / bw5;
    assert!((ratio - 5.0).abs() < 0.1, "bandwidth ratio {ratio}");
}

#[test]
fn rates_reports_loss_backout_and_sweep_files() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["rates", "--out", out_dir.to_str().unwrap(), "--power", "5,25"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(
        text.contains("source pair rate before losses: 226.4 kcps"),
        "stdout: {text}"
    );
    // the background fit clamps the idler arm and says so, on stderr
    assert!(stderr(&out).contains("warning") && stderr(&out).contains("telecom"));

    let csv = fs::read_to_string(out_dir.join("rates.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "header plus the two requested powers:\n{csv}");
    assert!(rows[1].starts_with("5,") && rows[2].starts_with("25,"));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("rates.json")).unwrap()).unwrap();
    assert!((json["backout_source_rate_hz"].as_f64().unwrap() - 226.4e3).abs() < 200.0);
}

#[test]
fn rates_rejects_power_above_the_process_cap() {
    let out = sfwm(&["rates", "--process", "process-2", "--power", "5,30"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("maximum"), "stderr: {}", stderr(&out));
}

#[test]
fn mc_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let dir_c = tmp.path().join("c");
    for (dir, seed) in [(&dir_a, "7"), (&dir_b, "7"), (&dir_c, "8")] {
        let out = sfwm(&[
            "mc",
            "--out",
            dir.to_str().unwrap(),
            "--duration",
            "0.2",
            "--seed",
            seed,
        ]);
        assert!(out.status.success(), "stderr: {}", stderr(&out));
    }
    let hist = |dir: &Path| fs::read(dir.join("histogram-process-1.csv")).unwrap();
    assert_eq!(hist(&dir_a), hist(&dir_b), "same seed must give identical output");
    assert_ne!(hist(&dir_a), hist(&dir_c), "different seed must change the draw");
}

#[test]
fn mc_writes_tag_streams_on_request() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = sfwm(&[
        "mc",
        "--out",
        out_dir.to_str().unwrap(),
        "--duration",
        "0.01",
        "--streams",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    for name in ["tags-process-1.csv", "tags-process-1.bin", "tags-process-1.bin.json"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let bin = fs::read(out_dir.join("tags-process-1.bin")).unwrap();
    assert_eq!(bin.len() % 10, 0, "10-byte records");

    let g2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("g2-process-1.json")).unwrap())
            .unwrap();
    assert_eq!(g2["seed"].as_u64().unwrap(), 1);
    assert!(g2["predicted"]["g2"].as_f64().unwrap() > 1.0);
}

/// Long-run convergence: ten minutes of simulated acquisition lands the
/// histogram g² within 5% of the windowed analytic prediction. The run is
/// accumulated in 60 s blocks, so it costs tens of seconds but bounded
/// memory.
#[test]
fn ten_minute_equivalent_mc_matches_the_analytic_prediction() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let out = sfwm(&["mc", "--out", out_dir.to_str().unwrap(), "--duration", "600"]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let g2: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("g2-process-1.json")).unwrap())
            .unwrap();
    let measured = g2["result"]["g2"].as_f64().unwrap();
    let predicted = g2["predicted"]["g2"].as_f64().unwrap();
    assert!(
        (measured / predicted - 1.0).abs() <= 0.05,
        "g2 {measured} vs predicted {predicted}"
    );
}

#[test]
fn mc_rejects_nonpositive_duration() {
    let out = sfwm(&["mc", "--duration", "0"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("duration"), "stderr: {}", stderr(&out));
}

#[test]
fn seed_override_changes_the_config_hash() {
    let tmp = TempDir::new().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for (dir, seed) in [(&dir_a, "1"), (&dir_b, "2")] {
        let out = sfwm(&["modes", "--out", dir.to_str().unwrap(), "--seed", seed]);
        assert!(out.status.success());
    }
    let hash = |dir: &Path| -> String {
        fs::read_to_string(dir.join("modes.csv"))
            .unwrap()
            .lines()
            .find(|l| l.contains("config_sha256"))
            .unwrap()
            .to_string()
    };
    assert_ne!(hash(&dir_a), hash(&dir_b), "provenance must reflect the effective seed");
}
