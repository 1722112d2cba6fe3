//! Scenarios, references, metrics and configuration.
//!
//! [`run_scenario`] wires servo → mass-property refresh → controller →
//! dynamics: the controller runs at `control_hz`, the plant is integrated
//! with RK4 at `physics_hz`, the servo and the disturbance are advanced at
//! the physics rate. Everything is seeded, so a run is a pure function of
//! its scenario.

pub mod config;
pub mod controller;
pub mod metrics;
pub mod reference;
pub mod scenarios;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::log::{write_trajectory_csv, TrajectorySample};
use crate::dynamics::{step_rk4, ControlInput, ExternalWrench, State};
use crate::error::{Error, Result};
use crate::geometry::{total_inertia, Payload};
use crate::servo::Servo;
pub use config::{
    BenchConfig, CalibrationConfig, ControllerKind, DisturbanceKind, DisturbanceSpec, GapOrientation, GapSpec,
    MorphSchedule, PayloadEvent, Scenario,
};
pub use controller::{Controller, TickDiagnostics};
pub use metrics::{Metrics, MetricsAccumulator, TickRecord};
pub use reference::{figure8_reference, Figure8, ReferenceSample, Segment, Trajectory, Waypoints};
pub use scenarios::{figure8_scenario, gap_crossing_scenario, grasp_scenario, hover_scenario, vertical_hole_scenario};

/// External force/torque process. The random part is a first-order
/// Gauss-Markov process with the requested stationary deviation.
#[derive(Debug, Clone)]
struct Disturbance {
    spec: DisturbanceSpec,
    rng: ChaCha8Rng,
    force: Vector3<f64>,
    torque: Vector3<f64>,
}

impl Disturbance {
    fn new(spec: DisturbanceSpec, seed: u64) -> Self {
        let mut d =
            Self { spec, rng: ChaCha8Rng::seed_from_u64(seed), force: Vector3::zeros(), torque: Vector3::zeros() };
        if spec.kind == DisturbanceKind::BandLimited {
            d.force = d.normal3() * spec.force_std;
            d.torque = d.normal3() * spec.torque_std;
        }
        d
    }

    fn normal3(&mut self) -> Vector3<f64> {
        Vector3::from_fn(|_, _| StandardNormal.sample(&mut self.rng))
    }

    fn advance(&mut self, dt: f64) {
        if self.spec.kind != DisturbanceKind::BandLimited {
            return;
        }
        let a = (-2.0 * std::f64::consts::PI * self.spec.bandwidth * dt).exp();
        let b = (1.0 - a * a).sqrt();
        let nf = self.normal3();
        let nt = self.normal3();
        self.force = self.force * a + nf * (b * self.spec.force_std);
        self.torque = self.torque * a + nt * (b * self.spec.torque_std);
    }

    fn wrench(&self, drag_coefficient: f64) -> ExternalWrench {
        let s = &self.spec;
        let (force, torque) = match s.kind {
            DisturbanceKind::None => (Vector3::zeros(), Vector3::zeros()),
            DisturbanceKind::Constant => (Vector3::from(s.force), Vector3::from(s.torque)),
            DisturbanceKind::BandLimited => {
                (Vector3::from(s.force) + self.force, Vector3::from(s.torque) + self.torque)
            }
        };
        ExternalWrench { force, torque, drag_coefficient }
    }
}

/// Vehicle extent along the world axes that matter for a gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub success: bool,
    /// Largest vehicle width seen inside the crossing window, m.
    pub max_width: f64,
    pub min_width: f64,
    /// Width the vehicle has to stay below, m.
    pub limit: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub window_samples: usize,
}

/// Extent of the square footprint (corners at `(±L/2, ±L/2, 0)` in the body
/// frame) projected on world axis `axis`.
pub fn footprint_extent(sample: &TrajectorySample, axis: usize) -> f64 {
    let h = 0.5 * sample.size;
    let rot = sample.state.attitude;
    let coords = [(-h, -h), (h, -h), (h, h), (-h, h)].map(|(x, y)| (rot * Vector3::new(x, y, 0.0))[axis]);
    let max = coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = coords.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Width relevant for `gap` at one sample.
pub fn gap_width(sample: &TrajectorySample, gap: &GapSpec) -> f64 {
    match gap.orientation {
        GapOrientation::Horizontal => footprint_extent(sample, 1),
        GapOrientation::VerticalHole => footprint_extent(sample, 0).max(footprint_extent(sample, 1)),
    }
}

/// Checks every sample whose position along the crossing axis lies within
/// half the gap depth of the gap plane. An empty window counts as failure.
pub fn evaluate_gap(samples: &[TrajectorySample], gap: &GapSpec) -> GapReport {
    let axis = match gap.orientation {
        GapOrientation::Horizontal => 0,
        GapOrientation::VerticalHole => 2,
    };
    let limit = gap.width - gap.margin;
    let window: Vec<&TrajectorySample> =
        samples.iter().filter(|s| (s.state.position[axis] - gap.plane).abs() <= 0.5 * gap.depth).collect();
    let widths: Vec<f64> = window.iter().map(|s| gap_width(s, gap)).collect();
    let max_width = widths.iter().copied().fold(f64::NAN, f64::max);
    let min_width = widths.iter().copied().fold(f64::NAN, f64::min);
    GapReport {
        success: !widths.is_empty() && widths.iter().all(|w| *w < limit),
        max_width,
        min_width,
        limit,
        window_start: window.first().map_or(f64::NAN, |s| s.time),
        window_end: window.last().map_or(f64::NAN, |s| s.time),
        window_samples: window.len(),
    }
}

/// Result of one closed-loop run. A run that aborts keeps its partial logs
/// and carries the reason in `error`.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub name: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub samples: Vec<TrajectorySample>,
    pub ticks: Vec<TickRecord>,
    pub metrics: Metrics,
    pub gap: Option<GapReport>,
    pub error: Option<String>,
    pub thrust_box: (f64, f64),
    pub metrics_start: f64,
}

impl ScenarioOutcome {
    pub fn completed(&self) -> bool {
        self.error.is_none()
    }

    /// Mean commanded collective thrust over control ticks in `[t0, t1)`.
    pub fn mean_collective_thrust(&self, t0: f64, t1: f64) -> Option<f64> {
        let sums: Vec<f64> =
            self.ticks.iter().filter(|t| t.time >= t0 && t.time < t1).map(|t| t.thrusts.sum()).collect();
        (!sums.is_empty()).then(|| sums.iter().sum::<f64>() / sums.len() as f64)
    }

    pub fn final_position_error(&self) -> Option<Vector3<f64>> {
        self.ticks.last().map(TickRecord::error)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            name: self.name.clone(),
            controller: self.controller,
            seed: self.seed,
            completed: self.completed(),
            error: self.error.clone(),
            duration: self.samples.last().map_or(0.0, |s| s.time),
            metrics: self.metrics,
            gap: self.gap,
        }
    }

    /// Writes `trajectory.csv`, `diagnostics.csv`, `metrics.txt` and
    /// `summary.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let name = self.controller.name();
        write_trajectory_csv(BufWriter::new(File::create(dir.join("trajectory.csv"))?), &self.samples, Some(name))?;
        metrics::write_diagnostics_csv(BufWriter::new(File::create(dir.join("diagnostics.csv"))?), &self.ticks, name)?;
        let mut m = BufWriter::new(File::create(dir.join("metrics.txt"))?);
        writeln!(m, "scenario={}", self.name)?;
        writeln!(m, "controller={name}")?;
        writeln!(m, "seed={}", self.seed)?;
        writeln!(m, "completed={}", self.completed())?;
        if let Some(e) = &self.error {
            writeln!(m, "error={e}")?;
        }
        for (k, v) in self.metrics.key_values() {
            writeln!(m, "{k}={v}")?;
        }
        if let Some(g) = &self.gap {
            writeln!(m, "gap_success={}", g.success)?;
            writeln!(m, "gap_max_width={}", g.max_width)?;
            writeln!(m, "gap_min_width={}", g.min_width)?;
            writeln!(m, "gap_limit={}", g.limit)?;
        }
        m.flush()?;
        let json = serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("summary.json"), json + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub name: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub completed: bool,
    pub error: Option<String>,
    pub duration: f64,
    pub metrics: Metrics,
    pub gap: Option<GapReport>,
}

fn payload_at(sc: &Scenario, t: f64) -> Payload {
    let active: Vec<Payload> = sc.payload.iter().filter(|p| p.active_at(t)).map(PayloadEvent::payload).collect();
    match active.len() {
        0 => Payload::none(),
        1 => active[0],
        _ => Payload::combined(&active),
    }
}

/// Runs `sc` with its controller selection. Invalid configurations are
/// errors; failures during the run abort it and are reported in the
/// outcome together with the logs up to that point.
pub fn run_scenario(sc: &Scenario, seed: u64) -> Result<ScenarioOutcome> {
    sc.validate()?;
    let geometry = sc.vehicle.geometry()?;
    let substeps = sc.substeps()?;
    let control_dt = 1.0 / sc.control_hz;
    let physics_dt = control_dt / substeps as f64;
    let ticks_total = (sc.duration * sc.control_hz).round() as usize;

    let mut controller = Controller::from_scenario(sc, sc.controller);
    let thrust_box = controller.thrust_box();
    let mut servo = Servo::new(sc.servo, sc.morph.size_at(0.0))?;
    let mut disturbance = Disturbance::new(sc.disturbance, seed);
    let start = sc.trajectory.sample(0.0);
    let mut x = if sc.start_at_rest { State::at_rest(start.position) } else { start.state() };
    let mut acc = MetricsAccumulator::new(sc.metrics_start, thrust_box);

    let mut samples = Vec::with_capacity(ticks_total * substeps + 1);
    let mut ticks = Vec::with_capacity(ticks_total);
    let mut error = None;
    let mut last_input = ControlInput::new(Vector4::zeros());
    let mut last_size = servo.size;

    'run: for k in 0..ticks_total {
        let t = k as f64 * control_dt;
        let props = match total_inertia(&geometry, servo.size, &payload_at(sc, t)) {
            Ok(p) => p,
            Err(e) => {
                error = Some(format!("t = {t:.3} s: mass properties: {e}"));
                break;
            }
        };
        let (u, diagnostics) = match controller.compute(t, &x, &sc.trajectory, &props) {
            Ok(r) => r,
            Err(e) => {
                error = Some(format!("t = {t:.3} s: controller: {e}"));
                break;
            }
        };
        let tick = TickRecord {
            time: t,
            reference: sc.trajectory.sample(t).position,
            position: x.position,
            thrusts: u.thrusts,
            size: servo.size,
            mass: props.mass,
            diagnostics,
        };
        acc.push(&tick);
        ticks.push(tick);
        for s in 0..substeps {
            let ts = t + s as f64 * physics_dt;
            samples.push(TrajectorySample { time: ts, state: x, thrusts: u.thrusts, size: servo.size });
            // the servo keeps moving between ticks; payload events act on ticks
            let plant = if servo.size == props.size {
                Ok(props.clone())
            } else {
                total_inertia(&geometry, servo.size, &payload_at(sc, t))
            };
            let wrench = disturbance.wrench(sc.drag_coefficient);
            x = match plant.and_then(|p| step_rk4(&x, &u, &p, &wrench, physics_dt)) {
                Ok(next) if next.is_finite() && next.position.norm() < 1e4 => next,
                Ok(_) | Err(Error::IntegrationDiverged { .. }) => {
                    error = Some(format!("t = {ts:.3} s: integration diverged"));
                    break 'run;
                }
                Err(e) => {
                    error = Some(format!("t = {ts:.3} s: {e}"));
                    break 'run;
                }
            };
            servo.advance(sc.morph.size_at(ts + physics_dt), physics_dt);
            disturbance.advance(physics_dt);
        }
        last_input = u;
        last_size = servo.size;
    }
    if error.is_none() {
        samples.push(TrajectorySample {
            time: ticks_total as f64 * control_dt,
            state: x,
            thrusts: last_input.thrusts,
            size: last_size,
        });
    }

    let gap = sc.gap.as_ref().map(|g| {
        let mut report = evaluate_gap(&samples, g);
        report.success &= error.is_none();
        report
    });
    Ok(ScenarioOutcome {
        name: sc.name.clone(),
        controller: sc.controller,
        seed,
        samples,
        ticks,
        metrics: acc.finish(),
        gap,
        error,
        thrust_box,
        metrics_start: sc.metrics_start,
    })
}

/// One cell of the comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub v_max: f64,
    pub controller: ControllerKind,
    pub outcome: std::result::Result<ScenarioOutcome, String>,
}

impl ComparisonRow {
    /// Metrics of a run that completed.
    pub fn metrics(&self) -> Option<&Metrics> {
        match &self.outcome {
            Ok(o) if o.completed() => Some(&o.metrics),
            _ => None,
        }
    }

    pub fn status(&self) -> String {
        match &self.outcome {
            Ok(o) => o.error.clone().unwrap_or_else(|| "ok".into()),
            Err(e) => e.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonTable {
    pub speeds: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    /// Speed-major, controllers in the order given.
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, v_max: f64, controller: ControllerKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.v_max == v_max && r.controller == controller)
    }

    /// Wide CSV: one line per speed, average and maximum error per
    /// controller; failed runs leave empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["v_max".to_string()];
        for c in &self.controllers {
            header.push(format!("{c}_avg"));
            header.push(format!("{c}_max"));
        }
        w.write_record(&header)?;
        for chunk in self.rows.chunks(self.controllers.len()) {
            let mut line = vec![chunk[0].v_max.to_string()];
            for row in chunk {
                match row.metrics() {
                    Some(m) => line.extend([m.rmse.to_string(), m.max_error.to_string()]),
                    None => line.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&line)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{:>6}", "v_max");
        for c in &self.controllers {
            s += &format!(" {:>12} {:>12}", format!("{c} avg"), format!("{c} max"));
        }
        s.push('\n');
        for chunk in self.rows.chunks(self.controllers.len()) {
            s += &format!("{:>6.2}", chunk[0].v_max);
            for row in chunk {
                match row.metrics() {
                    Some(m) => s += &format!(" {:>12.4} {:>12.4}", m.rmse, m.max_error),
                    None => s += &format!(" {:>12} {:>12}", "failed", ""),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs the figure-8 at every speed with every controller, in parallel.
/// A failing cell is recorded and does not stop the others.
pub fn compare_controllers(bench: &BenchConfig) -> Result<ComparisonTable> {
    if bench.controllers.len() < 2 {
        return Err(Error::InvalidConfig("a comparison needs at least two controllers".into()));
    }
    let jobs: Vec<(f64, ControllerKind)> =
        bench.speeds.iter().flat_map(|&v| bench.controllers.iter().map(move |&c| (v, c))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(v_max, controller)| {
            let sc = scenarios::bench_scenario(&bench.scenario, v_max, controller, bench.laps);
            let outcome = run_scenario(&sc, sc.seed).map_err(|e| e.to_string());
            ComparisonRow { v_max, controller, outcome }
        })
        .collect();
    Ok(ComparisonTable { speeds: bench.speeds.clone(), controllers: bench.controllers.clone(), rows })
}
