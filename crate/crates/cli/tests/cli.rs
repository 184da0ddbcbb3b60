//! Golden-file tests: each command runs in a fresh directory and its outputs
//! are byte-compared with `tests/golden`. Set `UPDATE_GOLDEN=1` to rewrite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn sonovortex(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonovortex"))
        .args(args)
        .current_dir(dir)
        .env_remove("SONOVORTEX_CONFIG")
        .output()
        .expect("binary runs")
}

fn check_golden(name: &str, actual: &[u8]) {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read(&path).unwrap_or_else(|_| panic!("missing golden file {name}"));
    assert!(
        expected == actual,
        "{name} differs from golden:\n{}",
        String::from_utf8_lossy(actual)
    );
}

fn ok(out: &Output) -> &[u8] {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    &out.stdout
}

fn small_config() -> String {
    golden_dir().join("small.toml").display().to_string()
}

#[test]
fn stability_reports() {
    let dir = tempfile::tempdir().unwrap();
    check_golden("stability_si.txt", ok(&sonovortex(dir.path(), &["stability"])));
    check_golden(
        "stability_lab.txt",
        ok(&sonovortex(dir.path(), &["--units", "lab", "stability"])),
    );
    let out = sonovortex(dir.path(), &["stability", "--aperture", "0.022"]);
    let text = String::from_utf8_lossy(ok(&out)).to_string();
    assert!(text.contains("stable: true") && text.contains("formation: at formation"));
}

#[test]
fn delays_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let out = sonovortex(dir.path(), &["--config", &cfg, "delays", "--focus", "0.01,0,0.15"]);
    check_golden("delays_si.csv", ok(&out));
    let out = sonovortex(
        dir.path(),
        &["--config", &cfg, "--units", "lab", "--out-dir", "o", "delays", "--focus", "0.01,0,0.15"],
    );
    ok(&out);
    check_golden("delays_lab.csv", &fs::read(dir.path().join("o/delays.csv")).unwrap());
}

#[test]
fn field_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = sonovortex(
        dir.path(),
        &[
            "--config", &small_config(), "--out-dir", "f", "field", "--focus", "0,0,0.15",
            "--extent", "0.02,0,0.01", "--step", "0.002",
        ],
    );
    check_golden("field_summary.txt", ok(&out));
    check_golden("field.csv", &fs::read(dir.path().join("f/field.csv")).unwrap());
    check_golden("field.pgm", &fs::read(dir.path().join("f/field.pgm")).unwrap());
}

#[test]
fn schedule_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let scene = golden_dir().join("scene.toml").display().to_string();
    let out = sonovortex(
        dir.path(),
        &["--config", &small_config(), "--units", "lab", "--out-dir", "s", "schedule", "--scene", &scene],
    );
    check_golden("schedule_summary.txt", ok(&out));
    for name in ["schedule.bin", "events.csv", "emulator.log"] {
        check_golden(name, &fs::read(dir.path().join("s").join(name)).unwrap());
    }
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("arrival_gap_us: 0\n"), "{text}");
}

#[test]
fn fixed_mode_uses_thirty_ms() {
    let dir = tempfile::tempdir().unwrap();
    let scene = golden_dir().join("scene.toml").display().to_string();
    let out = sonovortex(dir.path(), &["--units", "lab", "--out-dir", "s", "schedule", "--scene", &scene]);
    let text = String::from_utf8_lossy(ok(&out)).to_string();
    assert!(text.starts_with("offset_us: 30000\n"), "{text}");
}

#[test]
fn experiment_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = sonovortex(
        dir.path(),
        &["--config", &small_config(), "--units", "lab", "--out-dir", "e", "experiment", "--protocol", "all"],
    );
    check_golden("experiment_summary.txt", ok(&out));
    for name in [
        "double_point.csv",
        "double_point_thresholds.csv",
        "perceptual.csv",
        "simultaneous.csv",
        "reference.csv",
    ] {
        check_golden(name, &fs::read(dir.path().join("e").join(name)).unwrap());
    }
}

#[test]
fn seeded_experiment_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, sub: &str| {
        ok(&sonovortex(
            dir.path(),
            &["--config", &small_config(), "--seed", seed, "--out-dir", sub, "experiment", "--protocol", "perceptual"],
        ));
        fs::read(dir.path().join(sub).join("perceptual.csv")).unwrap()
    };
    assert_eq!(run("11", "a"), run("11", "b"));
}

#[test]
fn calibrate_prints_and_writes() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures");
    let cannon = fixtures.join("cannon_calibration.csv").display().to_string();
    let ultrasound = fixtures.join("ultrasound_calibration.csv").display().to_string();
    let out = sonovortex(dir.path(), &["calibrate", "--points", &cannon, "--kind", "cannon"]);
    check_golden("calibrate_cannon.toml", ok(&out));

    let cfg = dir.path().join("engine.toml");
    let cfg_s = cfg.display().to_string();
    ok(&sonovortex(
        dir.path(),
        &["--config", &cfg_s, "calibrate", "--points", &ultrasound, "--kind", "ultrasound", "--write"],
    ));
    ok(&sonovortex(
        dir.path(),
        &["--config", &cfg_s, "calibrate", "--points", &cannon, "--kind", "cannon", "--write"],
    ));
    let cfg = sonovortex::EngineConfig::load(&cfg).unwrap();
    assert!(cfg.calibration.cannon.is_some() && cfg.calibration.ultrasound.is_some());
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sonovortex"))
        .args(["delays", "--focus", "0.01,0,0.15"])
        .current_dir(dir.path())
        .env("SONOVORTEX_CONFIG", small_config())
        .output()
        .unwrap();
    check_golden("delays_si.csv", ok(&out));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[array]\nrows = 0\n").unwrap();
    let out = sonovortex(dir.path(), &["--config", "bad.toml", "stability"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[array]"));

    let out = sonovortex(dir.path(), &["stability", "--volume", "-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = sonovortex(dir.path(), &["delays", "--focus", "1,2"]);
    assert_eq!(out.status.code(), Some(2));

    let out = sonovortex(dir.path(), &["schedule", "--scene", "missing.toml"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = sonovortex(dir.path(), &["--out-dir", "blocker/x", "field", "--focus", "0,0,0.15", "--step", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
}
