use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use tidegym::records::TrajectoryRecord;
use tidegym::task::{Level, TaskConfig, TaskKind};
use tidegym::vehicle::VehicleConfig;

fn tidegym(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tidegym"))
        .args(args)
        .env_remove("TIDEGYM_FORMAT")
        .env_remove("TIDEGYM_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&tidegym(&["no-such-command"])), 1);
    assert_eq!(code(&tidegym(&["rollout", "--level", "bogus"])), 1);
    assert_eq!(code(&tidegym(&["rollout", "--task", "swimming"])), 1);
    assert_eq!(code(&tidegym(&["--help"])), 0);
}

#[test]
fn missing_policy_is_a_validation_error() {
    let out = tidegym(&[
        "eval",
        "--policy",
        "/definitely/missing.json",
        "--trials",
        "2",
        "--envs",
        "2",
    ]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing.json"), "{stderr}");
}

#[test]
fn bad_dt_is_a_validation_error() {
    assert_eq!(code(&tidegym(&["rollout", "--dt=0", "--steps", "2"])), 2);
}

#[test]
fn bench_with_one_env_writes_one_row_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    let out = tidegym(&[
        "bench",
        "--envs",
        "1",
        "--duration",
        "0.2",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(&dir.path().join("bench.jsonl"));
    assert_eq!(rows.lines().count(), 1);
    let row: serde_json::Value = serde_json::from_str(rows.lines().next().unwrap()).unwrap();
    assert_eq!(row["n_envs"], 1);
    assert!(row["aggregate"].as_f64().unwrap() > 0.0);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "bench");
    assert_eq!(manifest["schema_version"], 1);
    assert!(manifest["hardware"]["logical_cpus"].as_u64().unwrap() >= 1);
}

#[test]
fn training_is_byte_reproducible() {
    let run = || {
        let dir = TempDir::new().unwrap();
        let out = tidegym(&[
            "train",
            "--seed",
            "3",
            "--envs",
            "20",
            "--population",
            "10",
            "--iterations",
            "2",
            "--episode-steps",
            "30",
            "--out",
            path_str(dir.path()),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        (
            read(&dir.path().join("curve.jsonl")),
            read(&dir.path().join("policy.json")),
            dir,
        )
    };
    let (curve_a, policy_a, dir) = run();
    let (curve_b, policy_b, _) = run();
    assert_eq!(curve_a, curve_b);
    assert_eq!(policy_a, policy_b);
    assert_eq!(curve_a.lines().count(), 2);

    let policy = dir.path().join("policy.json");
    let eval_dir = TempDir::new().unwrap();
    let out = tidegym(&[
        "eval",
        "--policy",
        path_str(&policy),
        "--test-env",
        "env1",
        "--trials",
        "4",
        "--envs",
        "4",
        "--out",
        path_str(eval_dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report =
        tidegym::eval::EvalReport::from_json(&read(&eval_dir.path().join("report.json"))).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.cells[0].trials, 4);
}

#[test]
fn rollout_writes_one_valid_record_per_env_step() {
    let dir = TempDir::new().unwrap();
    let out = tidegym(&[
        "rollout",
        "--envs",
        "3",
        "--steps",
        "7",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("trajectory.jsonl"));
    let width = VehicleConfig::builtin("bluerov_heavy")
        .unwrap()
        .command_width();
    let records: Vec<TrajectoryRecord> = text
        .lines()
        .map(|l| TrajectoryRecord::parse_line(l, width).unwrap())
        .collect();
    assert_eq!(records.len(), 21);
    for env in 0..3 {
        let steps: Vec<u64> = records
            .iter()
            .filter(|r| r.env == env)
            .map(|r| r.step)
            .collect();
        assert_eq!(steps, (0..7).collect::<Vec<_>>());
    }
}

#[test]
fn neutral_vehicle_stays_put_in_a_rollout() {
    let dir = TempDir::new().unwrap();
    let mut vehicle = VehicleConfig::builtin("bluerov").unwrap();
    vehicle.rigid_body.volume = vehicle.rigid_body.mass / vehicle.hydrodynamics.fluid_density;
    vehicle.name = "neutral".into();
    let vehicle_path = dir.path().join("neutral.toml");
    std::fs::write(&vehicle_path, vehicle.to_toml()).unwrap();

    let mut task = TaskConfig::new(
        TaskKind::StationKeeping,
        path_str(&vehicle_path),
        Level::Standard,
    );
    task.init.position_spread_m = 0.0;
    task.init.depth_spread_m = 0.0;
    task.init.yaw_spread_rad = 0.0;
    task.init.tilt_spread_rad = 0.0;
    let task_path = dir.path().join("task.toml");
    std::fs::write(&task_path, task.to_toml()).unwrap();

    let out = tidegym(&[
        "rollout",
        "--task-config",
        path_str(&task_path),
        "--steps",
        "50",
        "--format",
        "records",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let width = vehicle.command_width();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut n = 0;
    for line in stdout.lines() {
        let r = TrajectoryRecord::parse_line(line, width).unwrap();
        let drift = ((r.p[0]).powi(2) + (r.p[1]).powi(2) + (r.p[2] - 5.0).powi(2)).sqrt();
        assert!(drift < 1e-9, "step {} drifted {drift}", r.step);
        n += 1;
    }
    assert_eq!(n, 50);
}

#[test]
fn numerical_blowup_exits_three() {
    let dir = TempDir::new().unwrap();
    let mut task = TaskConfig::new(TaskKind::StationKeeping, "bluerov_heavy", Level::Standard);
    task.bounds_m = 1e300;
    let task_path = dir.path().join("task.toml");
    std::fs::write(&task_path, task.to_toml()).unwrap();
    let out = tidegym(&[
        "rollout",
        "--task-config",
        path_str(&task_path),
        "--dt",
        "1000",
        "--steps",
        "40",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dr_check_reports_every_parameter() {
    let dir = TempDir::new().unwrap();
    let out = tidegym(&[
        "dr-check",
        "--samples",
        "2000",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = read(&dir.path().join("dr_check.jsonl"))
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!rows.is_empty());
    for row in &rows {
        assert!(row["mean_rel_error"].as_f64().unwrap() < 0.05, "{row}");
    }
}

#[test]
fn environment_variables_override_defaults() {
    let out = Command::new(env!("CARGO_BIN_EXE_tidegym"))
        .args(["rollout", "--steps", "3"])
        .env("TIDEGYM_FORMAT", "records")
        .env("TIDEGYM_ENVS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 6);
    assert!(stdout.lines().all(|l| l.starts_with('{')));
}

#[test]
fn manifest_goes_to_stderr_without_an_output_directory() {
    let out = tidegym(&["rollout", "--steps", "1", "--seed", "12"]);
    assert_eq!(code(&out), 0);
    let stderr = String::from_utf8(out.stderr).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(manifest["command"], "rollout");
    assert_eq!(manifest["seed"], 12);
}
