use amor_cli::{emit_plotdata, run_scenario, Mode, ScenarioSpec, MANIFEST};
use serde_json::Value;
use std::path::Path;
use std::process::Command;

const FAST: &str = "\
# small grids so each mode finishes in well under a second
duration = 0.2 s
lockin_dwell = 0.1 s
sweep_points = 11
powers = 0, 20, 50, 100, 200, 400 uW
snl_low_max_freq = 60 kHz
snl_high_max_freq = 400 kHz
";

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, format!("{FAST}{extra}")).unwrap();
    p
}

fn run(mode: Mode, cfg: &Path, out: &Path, seed: u64, workers: usize) {
    let spec = ScenarioSpec::load(mode, Some(cfg), &[], out, seed, workers).unwrap();
    run_scenario(&spec).unwrap();
}

fn data_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != MANIFEST)
        .collect();
    names.sort();
    names
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "fields = 7.0, 7.6 uT\n");
    for mode in [Mode::Simulate, Mode::DemodSweep, Mode::Spectrum, Mode::NoiseScan, Mode::SnlMap, Mode::SensitivitySweep] {
        let a = tmp.path().join(format!("{}-1", mode.as_str()));
        let b = tmp.path().join(format!("{}-3", mode.as_str()));
        run(mode, &cfg, &a, 42, 1);
        run(mode, &cfg, &b, 42, 3);
        let names = data_files(&a);
        assert_eq!(names, data_files(&b));
        for n in &names {
            assert_eq!(std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap(), "{}/{n}", mode.as_str());
        }
    }
}

#[test]
fn seed_changes_the_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    run(Mode::Spectrum, &cfg, &tmp.path().join("a"), 1, 2);
    run(Mode::Spectrum, &cfg, &tmp.path().join("b"), 2, 2);
    let read = |d: &str| std::fs::read_to_string(tmp.path().join(d).join("spectrum_background.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn manifest_records_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("out");
    let spec = ScenarioSpec::load(Mode::Spectrum, Some(&cfg), &[("probe_power".into(), "120 uW".into())], &out, 9, 2).unwrap();
    run_scenario(&spec).unwrap();
    let m = json(&out.join(MANIFEST));
    assert_eq!(m["mode"], "spectrum");
    assert_eq!(m["seed"], 9);
    assert_eq!(m["overrides"][0]["key"], "probe_power");
    assert!(m["resolved_config"].as_str().unwrap().contains("probe_power"));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    for f in ["spectrum.csv", "spectrum_background.csv", "spectrum.json", "fig3_spectrum.dat", "plotdata.json"] {
        assert!(outputs.contains(&f), "{f} not in {outputs:?}");
    }
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    let summary = json(&out.join("spectrum.json"));
    assert_eq!(summary["seed"], 9);
    assert!((summary["power_w"].as_f64().unwrap() - 120e-6).abs() < 1e-15);
    let csv = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(csv.contains("# seed = 9"));
}

#[test]
fn noise_scan_pins_the_electronic_term() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "detection_freqs = 50, 71 kHz\n");
    let out = tmp.path().join("out");
    run(Mode::NoiseScan, &cfg, &out, 3, 2);
    let budgets = json(&out.join("budget.json"));
    let list = budgets["budgets"].as_array().unwrap();
    assert_eq!(list.len(), 2);
    for b in list {
        let zero = b["zero_power_psd_w_per_hz"].as_f64().unwrap();
        assert_eq!(b["fit"]["budget"]["coef_elec"].as_f64().unwrap(), zero);
        assert_eq!(b["fit"]["fixed_elec"], true);
        // shot term of the default chain, about 7.7e-10 W/Hz per W
        let shot = b["fit"]["budget"]["coef_shot"].as_f64().unwrap();
        assert!(shot > 5e-10 && shot < 1e-9, "{shot}");
    }
}

#[test]
fn snl_plot_marks_empty_ranges() {
    let tmp = tempfile::tempdir().unwrap();
    // a technical floor this large leaves no SNL range anywhere
    let cfg = write_config(tmp.path(), "technical_noise_coef = 1e-3\n");
    let out = tmp.path().join("out");
    run(Mode::SnlMap, &cfg, &out, 4, 2);
    let fig6 = std::fs::read_to_string(out.join("fig6_snl.dat")).unwrap();
    let rows: Vec<&str> = fig6.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(!rows.is_empty());
    for r in rows {
        let cols: Vec<&str> = r.split_whitespace().collect();
        assert_eq!(cols.len(), 7, "{r}");
        assert!(cols[1..].iter().all(|c| *c == "nan"), "{r}");
    }
}

#[test]
fn plotdata_needs_results() {
    let tmp = tempfile::tempdir().unwrap();
    let err = emit_plotdata(tmp.path(), 0).unwrap_err();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn demod_sweep_recovers_the_resonance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep_points = 41\nfields = 6.8, 7.2, 7.6 uT\n");
    let out = tmp.path().join("out");
    run(Mode::DemodSweep, &cfg, &out, 5, 2);
    let fit = json(&out.join("fit.json"));
    let truth = fit["truth"]["center_freq"].as_f64().unwrap();
    let gamma = fit["truth"]["gamma_fwhm"].as_f64().unwrap();
    assert!((fit["fit"]["center_freq"].as_f64().unwrap() - truth).abs() < gamma / 20.0);
    let scan = amor_core::export::read_numeric_csv(&std::fs::read_to_string(out.join("field_scan.csv")).unwrap()).unwrap();
    assert_eq!(scan.len(), 3);
    for row in scan {
        // expected vs fitted centre, 2g_F µ_B B/h with g_F = 1/3
        let expected = 2.0 / 3.0 * 9.274_010_078_3e-24 * row[0] / 6.626_070_15e-34;
        assert!((row[1] / expected - 1.0).abs() < 1e-9);
        assert!((row[2] - expected).abs() < gamma / 10.0, "{row:?}");
    }
}

fn amor(args: &[&str], envs: &[(&str, &str)]) -> (i32, String, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_amor"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

#[test]
fn binary_exit_codes_and_json_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    std::fs::write(&bad, "probe_power = -5 uW\n").unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let (code, _, err) = amor(&["spectrum", "--config", bad.to_str().unwrap(), "--out", out], &[]);
    assert_eq!(code, 2);
    let e: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(e["error"]["kind"], "config");
    assert_eq!(e["error"]["field"], "probe_power");

    let garbled = tmp.path().join("garbled.cfg");
    std::fs::write(&garbled, "duration = 1 s\nthis is not a line\n").unwrap();
    let (code, _, err) = amor(&["spectrum", "--config", garbled.to_str().unwrap(), "--out", out], &[]);
    assert_eq!(code, 2);
    let e: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(e["error"]["line"], 2);

    let (code, _, err) = amor(&["spectrum", "--config", "/nonexistent/amor.cfg", "--out", out], &[]);
    assert_eq!(code, 4);
    assert!(err.contains("\"io\""));

    let (code, _, _) = amor(&["spectrum", "--out", out], &[("AMOR_NOT_A_KEY", "1")]);
    assert_eq!(code, 2);

    let (code, _, _) = amor(&["no-such-mode"], &[]);
    assert_eq!(code, 2);

    let (code, _, _) = amor(&["spectrum", "--workers", "0", "--out", out], &[]);
    assert_eq!(code, 2);
}

#[test]
fn binary_env_overrides_and_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let first = tmp.path().join("first");
    let (code, stdout, err) = amor(
        &["spectrum", "--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap(), "--seed", "17", "--workers", "2"],
        &[("AMOR_PROBE_POWER", "150 uW")],
    );
    assert_eq!(code, 0, "{err}");
    let ok: Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(ok["status"], "ok");
    let summary = json(&first.join("spectrum.json"));
    assert!((summary["power_w"].as_f64().unwrap() - 150e-6).abs() < 1e-15);

    let again = tmp.path().join("again");
    let (code, _, err) =
        amor(&["rerun", first.join(MANIFEST).to_str().unwrap(), "--out", again.to_str().unwrap(), "--workers", "1"], &[]);
    assert_eq!(code, 0, "{err}");
    for n in data_files(&first) {
        assert_eq!(std::fs::read(first.join(&n)).unwrap(), std::fs::read(again.join(&n)).unwrap(), "{n}");
    }
}
