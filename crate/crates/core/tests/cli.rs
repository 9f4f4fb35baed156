use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impedance_core::io::{read_bode, read_layer, read_time_series, write_layer};
use impedance_core::{presets, MlpFirstLayer};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;

fn impedance(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impedance"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = impedance(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn short_sweep_config(amplitude: f64, noise: f64) -> Value {
    json!({
        "excitation": {"chirp": {"f_start": 0.1, "f_end": 25.0, "amplitude": amplitude, "duration": 2.0}},
        "actuator_sim": {"sim": {"inner_loop_rate": 10000, "log_rate": 1000, "measurement_noise_std": noise}},
    })
}

fn gains_config(kp: f64, kd: f64) -> Value {
    json!({"actuator_sim": {"gains": {"kp": kp, "kd": kd}}})
}

fn knee_inertia() -> f64 {
    let p = presets::knee_params::<f64>();
    p.link_inertia + p.rotor_inertia * p.gear_ratio * p.gear_ratio
}

fn oracle_db(inertia: f64, kp: f64, kd: f64, f: f64) -> f64 {
    let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
    let h = (kp + kd * s) / (inertia * s * s + kd * s + kp);
    20.0 * h.norm().log10()
}

/// ω² at the magnitude peak: the positive root of I·Kd²·x² + 2I·Kp²·x − 2Kp³ = 0.
fn oracle_peak_hz(inertia: f64, kp: f64, kd: f64) -> f64 {
    let x = kp * kp / (kd * kd) * ((1.0 + 2.0 * kd * kd / (inertia * kp)).sqrt() - 1.0);
    x.sqrt() / (2.0 * std::f64::consts::PI)
}

fn bode_rows(p: &Path) -> Vec<(f64, f64)> {
    let curve = read_bode::<f64, _>(fs::read(p).unwrap().as_slice()).unwrap();
    curve.frequencies.iter().copied().zip(curve.magnitude_db.iter().copied()).collect()
}

#[test]
fn sweep_writes_one_row_per_log_sample() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &short_sweep_config(0.25, 0.0));
    ok(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--out", "sweep.csv"]);
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,theta_des,theta_meas"));
    assert_eq!(lines.count(), 2001);
    let ts = read_time_series::<f64, _>(text.as_bytes()).unwrap();
    assert_eq!(ts.sample_rate, 1000.0);
}

#[test]
fn zero_amplitude_sweep_stays_at_rest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &short_sweep_config(0.0, 0.0));
    ok(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--out", "sweep.csv"]);
    let ts = read_time_series::<f64, _>(fs::read(dir.path().join("sweep.csv")).unwrap().as_slice()).unwrap();
    assert!(ts.command.iter().all(|&v| v == 0.0));
    assert!(ts.measured.iter().all(|&v| v == 0.0));
}

#[test]
fn undamped_corner_exits_with_divergence() {
    let dir = TempDir::new().unwrap();
    let mut cfg = gains_config(27.0, 0.0);
    cfg["excitation"] = json!({"chirp": {"f_start": 0.1, "f_end": 25.0, "amplitude": 0.25, "duration": 600.0}});
    let cfg = write_json(dir.path(), "cfg.json", &cfg);
    let out = impedance(dir.path(), &["sweep", "--config", cfg.to_str().unwrap(), "--out", "sweep.csv"]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("diverged"), "{stderr}");
}

#[test]
fn sweep_is_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &short_sweep_config(0.25, 0.002));
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["sweep", "--config", c, "--seed", "5", "--out", "a.csv"]);
    ok(dir.path(), &["sweep", "--config", c, "--seed", "5", "--out", "b.csv"]);
    ok(dir.path(), &["sweep", "--config", c, "--seed", "6", "--out", "c.csv"]);
    let read = |n: &str| fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

fn write_gain_csv(dir: &Path, name: &str, gain: f64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut text = String::from("t,theta_des,theta_meas\n");
    for i in 0..60_000 {
        let x: f64 = rng.random_range(-0.3..0.3);
        text.push_str(&format!("{},{x},{}\n", i as f64 / 1000.0, gain * x));
    }
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn estimate_recovers_pure_gains() {
    let dir = TempDir::new().unwrap();
    for (name, gain, want_db) in [("identity.csv", 1.0, 0.0), ("half.csv", 0.5, -20.0 * 2f64.log10())] {
        let input = write_gain_csv(dir.path(), name, gain);
        let out = format!("{name}.bode.csv");
        ok(
            dir.path(),
            &["estimate", "--input", input.to_str().unwrap(), "--window", "10", "--overlap", "0.5", "--out", &out],
        );
        let rows = bode_rows(&dir.path().join(&out));
        assert!(!rows.is_empty());
        for (f, m) in rows {
            assert!((m - want_db).abs() < 1e-9, "{name} at {f} Hz: {m} dB");
        }
    }
    assert!((-20.0 * 2f64.log10() + 6.0206).abs() < 1e-4);
}

#[test]
fn estimated_sweep_tracks_closed_form_in_band() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["sweep", "--out", "sweep.csv"]);
    ok(dir.path(), &["estimate", "--input", "sweep.csv", "--out", "est.csv"]);
    let inertia = knee_inertia();
    let mut checked = 0;
    for (f, m) in bode_rows(&dir.path().join("est.csv")) {
        if (0.5..=15.0).contains(&f) {
            let want = oracle_db(inertia, 17.0, 0.4, f);
            assert!((m - want).abs() < 0.5, "{f} Hz: {m} vs {want}");
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn bode_default_grid() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["bode", "--out", "bode.csv"]);
    let rows = bode_rows(&dir.path().join("bode.csv"));
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0].0, 0.05);
    assert_eq!(rows[199].0, 50.0);
    assert!(rows[0].1.abs() < 0.01);
    let inertia = knee_inertia();
    for &(f, m) in &rows {
        assert!((m - oracle_db(inertia, 17.0, 0.4, f)).abs() < 1e-9);
    }
}

#[test]
fn bode_peak_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let inertia = knee_inertia();
    for (i, (kp, kd)) in [(17.0, 0.4), (21.5, 0.55), (22.0, 0.55)].into_iter().enumerate() {
        let cfg = write_json(dir.path(), &format!("cfg{i}.json"), &gains_config(kp, kd));
        let out = format!("bode{i}.csv");
        ok(
            dir.path(),
            &[
                "bode", "--config", cfg.to_str().unwrap(), "--points", "4001", "--f-min", "1", "--f-max", "20",
                "--out", &out,
            ],
        );
        let rows = bode_rows(&dir.path().join(&out));
        let &(f_peak, m_peak) = rows.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        let want = oracle_peak_hz(inertia, kp, kd);
        // adjacent points are 0.075% apart
        assert!((f_peak / want - 1.0).abs() < 1e-3, "Kp={kp} Kd={kd}: {f_peak} vs {want}");
        assert!((m_peak - oracle_db(inertia, kp, kd, want)).abs() < 1e-4);
        assert!(m_peak > 1.0);
    }
}

#[test]
fn bode_without_damping_rolls_off_at_forty_db_per_decade() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &gains_config(17.0, 0.0));
    ok(
        dir.path(),
        &["bode", "--config", cfg.to_str().unwrap(), "--points", "3", "--f-min", "100", "--f-max", "10000", "--out", "b.csv"],
    );
    let rows = bode_rows(&dir.path().join("b.csv"));
    let slope = (rows[2].1 - rows[1].1) / (rows[2].0 / rows[1].0).log10();
    assert!((slope + 40.0).abs() < 0.05, "{slope}");
}

fn small_grid_config() -> Value {
    json!({"matcher": {"grid": {"kp_range": [15.0, 19.0], "kd_range": [0.3, 0.5], "kp_count": 5, "kd_count": 5}}})
}

#[test]
fn match_recovers_its_own_reference() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &small_grid_config());
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["bode", "--config", c, "--f-min", "0.1", "--f-max", "20", "--out", "ref.csv"]);
    ok(dir.path(), &["match", "--config", c, "--reference", "ref.csv", "--out", "m"]);
    let m = dir.path().join("m");
    for f in ["surface.csv", "summary.json", "heatmap.svg", "bode_overlay.svg"] {
        assert!(m.join(f).is_file(), "{f}");
    }
    let summary = read_json(&m.join("summary.json"));
    assert_eq!(summary["best_gains"]["kp"].as_f64(), Some(17.0));
    assert_eq!(summary["best_gains"]["kd"].as_f64(), Some(0.4));
    assert_eq!(summary["best_index"], json!([2, 2]));
    assert!(summary["best_error"].as_f64().unwrap() < 1e-20);

    let surface = fs::read_to_string(m.join("surface.csv")).unwrap();
    assert_eq!(surface.lines().next(), Some("kp,kd,mse_db2"));
    assert_eq!(surface.lines().count(), 26);

    let svg = fs::read_to_string(m.join("heatmap.svg")).unwrap();
    let attr = |name: &str| -> f64 {
        let key = format!("{name}=\"");
        let start = svg.find("id=\"best-cell\"").unwrap();
        let rest = &svg[start..];
        let i = rest.find(&key).unwrap() + key.len();
        rest[i..i + rest[i..].find('"').unwrap()].parse().unwrap()
    };
    assert_eq!(attr("data-kp"), 17.0);
    assert_eq!(attr("data-kd"), 0.4);
}

#[test]
fn match_accepts_a_sweep_log() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &small_grid_config());
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["sweep", "--config", c, "--out", "sweep.csv"]);
    ok(dir.path(), &["match", "--config", c, "--reference", "sweep.csv", "--out", "m"]);
    let summary = read_json(&dir.path().join("m/summary.json"));
    assert_eq!(summary["best_gains"]["kp"].as_f64(), Some(17.0));
    assert_eq!(summary["best_gains"]["kd"].as_f64(), Some(0.4));
}

fn write_gain_files(dir: &Path, prefix: &str, gains: &[(f64, f64)]) -> Vec<String> {
    gains
        .iter()
        .enumerate()
        .map(|(i, &(kp, kd))| {
            let p = write_json(dir, &format!("{prefix}{i}.json"), &json!({"kp": kp, "kd": kd}));
            p.to_str().unwrap().to_owned()
        })
        .collect()
}

fn ranges(dir: &Path, files: &[String], margin: &str, out: &str) -> Value {
    let mut args = vec!["ranges"];
    args.extend(files.iter().map(String::as_str));
    args.extend(["--margin", margin, "--out", out]);
    ok(dir, &args);
    read_json(&dir.join(out))
}

#[test]
fn ranges_from_table_gains() {
    let dir = TempDir::new().unwrap();
    let knee = write_gain_files(dir.path(), "knee", &presets::Joint::Knee.measured_gains());
    let r = ranges(dir.path(), &knee, "1", "knee.json");
    assert_eq!(r["range"]["kp"]["nominal"].as_f64(), Some(22.0));
    assert_eq!(r["range"]["kp"]["half_range"].as_f64(), Some(0.5));
    assert_eq!(r["randomization"]["added_stiffness_range"], json!([-0.5, 0.5]));
    assert_eq!(r["inputs"].as_array().unwrap().len(), 4);

    let hip = write_gain_files(dir.path(), "hip", &presets::Joint::HipPitch.measured_gains());
    let r = ranges(dir.path(), &hip, "1.5", "hip.json");
    assert_eq!(r["range"]["kp"]["nominal"].as_f64(), Some(17.5));
    assert_eq!(r["range"]["kp"]["half_range"].as_f64(), Some(2.5));
}

#[test]
fn ranges_reads_match_summaries() {
    let dir = TempDir::new().unwrap();
    let cfg = write_json(dir.path(), "cfg.json", &small_grid_config());
    let c = cfg.to_str().unwrap();
    ok(dir.path(), &["bode", "--config", c, "--out", "ref.csv"]);
    ok(dir.path(), &["match", "--config", c, "--reference", "ref.csv", "--out", "m"]);
    let s = dir.path().join("m/summary.json").to_str().unwrap().to_owned();
    let r = ranges(dir.path(), &[s.clone(), s], "1", "r.json");
    assert_eq!(r["range"]["kp"]["nominal"].as_f64(), Some(17.0));
    assert_eq!(r["range"]["kd"]["nominal"].as_f64(), Some(0.4));
}

#[test]
fn identical_inputs_get_one_step() {
    let dir = TempDir::new().unwrap();
    let files = write_gain_files(dir.path(), "same", &[(20.0, 0.45); 3]);
    let r = ranges(dir.path(), &files, "1.5", "r.json");
    assert_eq!(r["range"]["kp"]["half_range"].as_f64(), Some(0.5));
    assert_eq!(r["range"]["kd"]["half_range"].as_f64(), Some(0.05));
}

fn random_layer(hidden: usize, inputs: usize) -> MlpFirstLayer<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let weights = (0..hidden * inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bias = (0..hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
    MlpFirstLayer::new(hidden, inputs, weights, bias).unwrap()
}

#[test]
fn widen_appends_zero_columns() {
    let dir = TempDir::new().unwrap();
    let layer = random_layer(16, 7);
    let mut bytes = Vec::new();
    write_layer(&layer, &mut bytes).unwrap();
    fs::write(dir.path().join("w.csv"), &bytes).unwrap();

    ok(dir.path(), &["widen", "--input", "w.csv", "--check", "--out", "w1.csv"]);
    let wide: MlpFirstLayer<f64> = read_layer(fs::read(dir.path().join("w1.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(wide.shape(), (16, 8));
    for r in 0..16 {
        assert_eq!(&wide.row(r)[..7], layer.row(r));
        assert_eq!(wide.row(r)[7], 0.0);
    }
    assert_eq!(wide.bias(), layer.bias());

    ok(dir.path(), &["widen", "--input", "w1.csv", "--count", "3", "--out", "w4.csv"]);
    let wider: MlpFirstLayer<f64> = read_layer(fs::read(dir.path().join("w4.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(wider.shape(), (16, 11));
}

#[test]
fn layer_files_round_trip_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let layer = random_layer(5, 4);
    let mut original = Vec::new();
    write_layer(&layer, &mut original).unwrap();
    fs::write(dir.path().join("w.csv"), &original).unwrap();
    ok(dir.path(), &["widen", "--input", "w.csv", "--out", "w1.csv"]);
    let written = fs::read(dir.path().join("w1.csv")).unwrap();
    let parsed: MlpFirstLayer<f64> = read_layer(written.as_slice()).unwrap();
    let mut again = Vec::new();
    write_layer(&parsed, &mut again).unwrap();
    assert_eq!(again, written);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let bad_value = write_json(d, "bad.json", &gains_config(-1.0, 0.4));
    let out = impedance(d, &["bode", "--config", bad_value.to_str().unwrap(), "--out", "b.csv"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("actuator_sim"));

    let unknown = write_json(d, "unknown.json", &json!({"actuator_sim": {"gain": {"kp": 1.0, "kd": 0.1}}}));
    assert_eq!(code(&impedance(d, &["bode", "--config", unknown.to_str().unwrap(), "--out", "b.csv"])), 1);

    fs::write(d.join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&impedance(d, &["bode", "--config", "broken.json", "--out", "b.csv"])), 1);

    assert_eq!(code(&impedance(d, &["bode", "--config", "missing.json", "--out", "b.csv"])), 3);
    assert_eq!(code(&impedance(d, &["estimate", "--input", "missing.csv", "--out", "e.csv"])), 3);
    assert_eq!(code(&impedance(d, &["bode", "--out", "no/such/dir/b.csv"])), 3);

    fs::write(d.join("garbage.csv"), "t,theta_des,theta_meas\n0,1\n").unwrap();
    assert_eq!(code(&impedance(d, &["estimate", "--input", "garbage.csv", "--out", "e.csv"])), 1);

    assert_eq!(code(&impedance(d, &["bode", "--f-min", "10", "--f-max", "1", "--out", "b.csv"])), 1);
    assert_eq!(code(&impedance(d, &["bode"])), 1);
    assert_eq!(code(&impedance(d, &["frobnicate"])), 1);
    assert_eq!(code(&impedance(d, &["--help"])), 0);
}

#[test]
fn show_config_round_trips() {
    let dir = TempDir::new().unwrap();
    let out = ok(dir.path(), &["show-config"]);
    fs::write(dir.path().join("cfg.json"), &out.stdout).unwrap();
    let again = ok(dir.path(), &["show-config", "--config", "cfg.json"]);
    assert_eq!(out.stdout, again.stdout);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["actuator_sim"]["gains"], json!({"kp": 17.0, "kd": 0.4}));
}
