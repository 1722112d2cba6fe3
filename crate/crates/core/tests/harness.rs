use std::process::Command;

use proptest::prelude::*;
use ringrotor::dynamics::log::write_trajectory_csv;
use ringrotor::harness::metrics::{read_diagnostics_csv, write_diagnostics_csv};
use ringrotor::harness::scenarios::bench_scenario;
use ringrotor::harness::{
    compare_controllers, figure8_reference, hover_scenario, run_scenario, BenchConfig, ControllerKind, DisturbanceKind,
    DisturbanceSpec, Figure8, Metrics, MorphSchedule, Scenario,
};
use ringrotor::servo::{Servo, ServoParams};
use ringrotor::{Error, L_MAX, L_MIN};

fn trajectory_text(sc: &Scenario, seed: u64) -> Vec<u8> {
    let out = run_scenario(sc, seed).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&mut buf, &out.samples, None).unwrap();
    buf
}

#[test]
fn figure8_peaks_at_v_max_and_repeats() {
    for v in [1.5, 2.0, 2.5] {
        let f = Figure8 { v_max: v, ..Figure8::default() };
        let n = 200_000;
        let peak = (0..=n).map(|i| f.sample(f.period() * i as f64 / n as f64).velocity.norm()).fold(0.0, f64::max);
        assert!((peak - v).abs() <= 1e-3 * v, "peak {peak} for {v}");
        let a = f.sample(0.3);
        let b = f.sample(0.3 + f.period());
        assert!((a.position - b.position).norm() < 1e-12);
        let origin = figure8_reference(v, 0.0).position;
        assert!(origin.x.abs() < 1e-15 && origin.y.abs() < 1e-15);
    }
}

#[test]
fn figure8_derivatives_match_finite_differences() {
    let f = Figure8 { v_max: 2.0, ..Figure8::default() };
    let h = 1e-5;
    for t in [0.0, 0.7, 2.3] {
        let (m, c, p) = (f.sample(t - h), f.sample(t), f.sample(t + h));
        assert!(((p.position - m.position) / (2.0 * h) - c.velocity).norm() < 1e-6);
        assert!(((p.velocity - m.velocity) / (2.0 * h) - c.acceleration).norm() < 1e-6);
        assert!(((p.acceleration - m.acceleration) / (2.0 * h) - c.jerk).norm() < 1e-5);
    }
}

#[test]
fn every_controller_holds_hover_exactly() {
    for c in ControllerKind::ALL {
        let sc = Scenario { duration: 3.0, ..hover_scenario(c) };
        let out = run_scenario(&sc, 0).unwrap();
        assert!(out.completed());
        assert!(out.metrics.rmse < 1e-6, "{c}: {}", out.metrics.rmse);
    }
}

#[test]
fn offline_metrics_equal_online_ones() {
    let sc = Scenario { duration: 3.0, ..bench_scenario(&Scenario::default(), 2.0, ControllerKind::Lqr, 1.0) };
    let out = run_scenario(&sc, 3).unwrap();
    let offline = Metrics::from_ticks(&out.ticks, out.metrics_start, out.thrust_box);
    let mut text = Vec::new();
    write_diagnostics_csv(&mut text, &out.ticks, "lqr").unwrap();
    let reread = read_diagnostics_csv(text.as_slice()).unwrap();
    let from_file = Metrics::from_ticks(&reread, out.metrics_start, out.thrust_box);
    for m in [offline, from_file] {
        assert!((m.rmse - out.metrics.rmse).abs() <= 1e-12);
        assert!((m.max_error - out.metrics.max_error).abs() <= 1e-12);
        assert_eq!(m.bound_violations, out.metrics.bound_violations);
        assert_eq!(m.samples, out.metrics.samples);
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let noisy = DisturbanceSpec {
        kind: DisturbanceKind::BandLimited,
        force_std: 0.2,
        torque_std: 0.002,
        ..DisturbanceSpec::default()
    };
    let sc = Scenario { duration: 2.0, disturbance: noisy, ..hover_scenario(ControllerKind::Nmpc) };
    let a = trajectory_text(&sc, 5);
    assert_eq!(a, trajectory_text(&sc, 5));
    assert_ne!(a, trajectory_text(&sc, 6));
}

#[test]
fn identical_controllers_give_identical_rows() {
    let bench = BenchConfig {
        speeds: vec![2.0],
        controllers: vec![ControllerKind::Nmpc, ControllerKind::Nmpc],
        laps: 0.3,
        ..BenchConfig::default()
    };
    let table = compare_controllers(&bench).unwrap();
    let (a, b) = (table.rows[0].metrics().unwrap(), table.rows[1].metrics().unwrap());
    assert_eq!(a.rmse, b.rmse);
    assert_eq!(a.max_error, b.max_error);
}

#[test]
fn a_failing_cell_does_not_stop_the_sweep() {
    // a huge steady push makes every run diverge; the sweep still reports them all
    let scenario = Scenario {
        disturbance: DisturbanceSpec {
            kind: DisturbanceKind::Constant,
            force: [1e7, 0.0, 0.0],
            ..DisturbanceSpec::default()
        },
        ..Scenario::default()
    };
    let bench = BenchConfig { speeds: vec![1.5, 2.0], laps: 0.2, scenario, ..BenchConfig::default() };
    let table = compare_controllers(&bench).unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.rows.iter().all(|r| r.metrics().is_none() && r.status().contains("diverged")));
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().ends_with(",,,,,"));
}

#[test]
fn configuration_errors_are_rejected() {
    assert!(matches!(Scenario::from_toml("duration = -1.0"), Err(Error::InvalidConfig(_))));
    assert!(matches!(Scenario::from_toml("bogus = 1"), Err(Error::Parse(_))));
    assert!(matches!(Scenario::from_toml("physics_hz = 150.0"), Err(Error::InvalidConfig(_))));
    assert!(BenchConfig::from_toml("controllers = [\"pid\"]").is_err());
    let sc = Scenario::from_toml("controller = \"lqr\"\nduration = 4.0").unwrap();
    assert_eq!(sc.controller, ControllerKind::Lqr);
    assert_eq!(Scenario::from_toml(&sc.to_toml().unwrap()).unwrap(), sc);
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/");
    for name in ["ringrotor_default.cfg", "figure8.cfg", "gap.cfg", "hole.cfg", "grasp.cfg"] {
        Scenario::load(format!("{dir}{name}").as_ref()).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    assert_eq!(Scenario::load(format!("{dir}ringrotor_default.cfg").as_ref()).unwrap(), Scenario::default());
    BenchConfig::load(format!("{dir}bench.cfg").as_ref()).unwrap();
}

#[test]
fn cli_run_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("short.cfg");
    std::fs::write(&cfg, "name = \"short\"\nduration = 1.0\n").unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_ringrotor"))
        .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--controller", "pid"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["trajectory.csv", "diagnostics.csv", "metrics.txt", "summary.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["controller"], "pid");

    let bad = Command::new(env!("CARGO_BIN_EXE_ringrotor")).args(["run", "/nonexistent.cfg"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn servo_stays_in_stroke_for_any_schedule(points in prop::collection::vec((0.0f64..5.0, 0.0f64..0.8), 1..6), start in 0.2f64..0.5) {
        let mut pts: Vec<[f64; 2]> = points.into_iter().map(|(t, l)| [t, l]).collect();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let schedule = MorphSchedule::Steps { points: pts };
        let params = ServoParams::default();
        let mut servo = Servo::new(params, start).unwrap();
        let mut last = servo.size;
        for k in 0..5000 {
            servo.advance(schedule.size_at(k as f64 * 1e-3), 1e-3);
            prop_assert!((L_MIN..=L_MAX).contains(&servo.size));
            prop_assert!((servo.size - last).abs() <= params.rate_limit * 1e-3 + 1e-15);
            last = servo.size;
        }
    }
}
