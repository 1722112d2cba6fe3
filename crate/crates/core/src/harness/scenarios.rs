//! Ready-made scenarios for the benchmark, the gap crossings and the grasp.

use super::config::{ControllerKind, GapOrientation, GapSpec, MorphSchedule, PayloadEvent, Scenario};
use super::reference::{Figure8, Segment, Trajectory, Waypoints};
use crate::{L_MAX, L_MIN};

/// Side-length oscillation flown during the benchmark: the full stroke
/// every four seconds.
pub fn benchmark_morph() -> MorphSchedule {
    MorphSchedule::Sinusoid { mean: 0.5 * (L_MIN + L_MAX), amplitude: 0.5 * (L_MAX - L_MIN), period: 4.0 }
}

pub fn hover_scenario(controller: ControllerKind) -> Scenario {
    Scenario { name: "hover".into(), controller, ..Scenario::default() }
}

/// One lap of the figure-8 at `v_max` while morphing continuously. The
/// vehicle starts hovering at the crossing point while the reference leaves
/// it at full speed, so the run opens with a hard catch-up.
pub fn figure8_scenario(v_max: f64, controller: ControllerKind) -> Scenario {
    let base = Scenario { morph: benchmark_morph(), start_at_rest: true, ..Scenario::default() };
    bench_scenario(&base, v_max, controller, 1.0)
}

/// `base` turned into a figure-8 run at `v_max` lasting `laps` periods.
/// Figure-8 settings already present in `base` (amplitude, altitude, yaw)
/// are kept.
pub fn bench_scenario(base: &Scenario, v_max: f64, controller: ControllerKind, laps: f64) -> Scenario {
    let figure8 = Figure8 { v_max, ..base.figure8().copied().unwrap_or_default() };
    Scenario {
        name: format!("figure8-{v_max}-{controller}"),
        controller,
        duration: laps * figure8.period(),
        trajectory: Trajectory::Figure8(figure8),
        ..base.clone()
    }
}

/// Straight flight from x = −2 m to x = 2 m through a 0.40 m wide vertical
/// slot at x = 0. With `morphing` the vehicle retracts 2.5 s before the
/// slot and expands again 1 s after it.
pub fn gap_crossing_scenario(controller: ControllerKind, morphing: bool) -> Scenario {
    let trajectory = Waypoints {
        start: [-2.0, 0.0, 1.0],
        yaw: 0.0,
        segments: vec![Segment { to: [-2.0, 0.0, 1.0], duration: 1.0 }, Segment { to: [2.0, 0.0, 1.0], duration: 6.0 }],
    };
    let crossing = trajectory.time_at_x(0.0).unwrap_or(4.0);
    Scenario {
        name: if morphing { "gap".into() } else { "gap-rigid".into() },
        controller,
        duration: 9.0,
        trajectory: Trajectory::Waypoints(trajectory),
        morph: crossing_morph(crossing, morphing),
        gap: Some(GapSpec::default()),
        ..Scenario::default()
    }
}

/// Climb from z = 0.5 m to z = 2.5 m through a 0.40 m × 0.40 m hole in a
/// horizontal frame at z = 1.5 m.
pub fn vertical_hole_scenario(controller: ControllerKind, morphing: bool) -> Scenario {
    let trajectory = Waypoints {
        start: [0.0, 0.0, 0.5],
        yaw: 0.0,
        segments: vec![Segment { to: [0.0, 0.0, 0.5], duration: 1.0 }, Segment { to: [0.0, 0.0, 2.5], duration: 5.0 }],
    };
    // the crossing is at the middle of the climb
    let crossing = 1.0 + 2.5;
    Scenario {
        name: if morphing { "hole".into() } else { "hole-rigid".into() },
        controller,
        duration: 8.0,
        trajectory: Trajectory::Waypoints(trajectory),
        morph: crossing_morph(crossing, morphing),
        gap: Some(GapSpec { orientation: GapOrientation::VerticalHole, plane: 1.5, ..GapSpec::default() }),
        ..Scenario::default()
    }
}

fn crossing_morph(crossing: f64, morphing: bool) -> MorphSchedule {
    if morphing {
        MorphSchedule::Steps { points: vec![[0.0, L_MAX], [crossing - 2.5, L_MIN], [crossing + 1.0, L_MAX]] }
    } else {
        MorphSchedule::Constant { size: L_MAX }
    }
}

/// Hover at (0, 0, 1) m; a 0.3 kg box is grasped at 3 s and released at
/// 10 s, the run ends at 16 s.
pub fn grasp_scenario(controller: ControllerKind) -> Scenario {
    Scenario {
        name: "grasp".into(),
        controller,
        duration: 16.0,
        payload: vec![PayloadEvent {
            attach: 3.0,
            detach: Some(10.0),
            mass: 0.3,
            size: [0.1, 0.1, 0.1],
            position: [0.0, 0.0, -0.05],
        }],
        ..Scenario::default()
    }
}
