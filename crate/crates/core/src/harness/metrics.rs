//! Tracking metrics, accumulated online during a run and recomputable from
//! the tick log.

use std::io::{Read, Write};

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use super::controller::TickDiagnostics;
use crate::dynamics::log::format_f64;
use crate::error::{Error, Result};

/// What happened at one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub reference: Vector3<f64>,
    pub position: Vector3<f64>,
    /// Commanded rotor thrusts, N.
    pub thrusts: Vector4<f64>,
    pub size: f64,
    pub mass: f64,
    pub diagnostics: TickDiagnostics,
}

impl TickRecord {
    pub fn error(&self) -> Vector3<f64> {
        self.reference - self.position
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    /// Ticks that entered the statistics.
    pub samples: usize,
    pub rmse: f64,
    pub max_error: f64,
    pub rmse_axis: [f64; 3],
    pub max_error_axis: [f64; 3],
    /// Fraction of ticks with at least one rotor command on a thrust bound.
    pub saturation_duty: f64,
    /// Rotor commands strictly outside the thrust box.
    pub bound_violations: usize,
    pub max_thrust: f64,
    pub min_thrust: f64,
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
}

impl Metrics {
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("samples".to_string(), self.samples.to_string()),
            ("rmse".to_string(), format_f64(self.rmse)),
            ("max_error".to_string(), format_f64(self.max_error)),
        ];
        for (i, axis) in ["x", "y", "z"].iter().enumerate() {
            kv.push((format!("rmse_{axis}"), format_f64(self.rmse_axis[i])));
            kv.push((format!("max_error_{axis}"), format_f64(self.max_error_axis[i])));
        }
        kv.push(("saturation_duty".into(), format_f64(self.saturation_duty)));
        kv.push(("bound_violations".into(), self.bound_violations.to_string()));
        kv.push(("max_thrust".into(), format_f64(self.max_thrust)));
        kv.push(("min_thrust".into(), format_f64(self.min_thrust)));
        kv.push(("mean_solve_time".into(), format_f64(self.mean_solve_time)));
        kv.push(("max_solve_time".into(), format_f64(self.max_solve_time)));
        kv
    }

    /// Independent offline pass over a tick log. Uses the same summation
    /// order as the accumulator, so the two agree to rounding.
    pub fn from_ticks(ticks: &[TickRecord], metrics_start: f64, thrust_box: (f64, f64)) -> Self {
        let used: Vec<&TickRecord> = ticks.iter().filter(|t| t.time >= metrics_start).collect();
        let n = used.len();
        if n == 0 {
            return Metrics::default();
        }
        let errors: Vec<Vector3<f64>> = used.iter().map(|t| t.error()).collect();
        let sq: f64 = errors.iter().fold(0.0, |acc, e| acc + e.norm_squared());
        let axis_sq: [f64; 3] = std::array::from_fn(|i| errors.iter().fold(0.0, |acc, e| acc + e[i] * e[i]));
        let (lo, hi) = thrust_box;
        let on_bound = used.iter().filter(|t| t.thrusts.iter().any(|&u| u >= hi || u <= lo)).count();
        let solve: f64 = used.iter().fold(0.0, |acc, t| acc + t.diagnostics.solve_time);
        Metrics {
            samples: n,
            rmse: (sq / n as f64).sqrt(),
            max_error: errors.iter().map(|e| e.norm()).fold(0.0, f64::max),
            rmse_axis: axis_sq.map(|s| (s / n as f64).sqrt()),
            max_error_axis: std::array::from_fn(|i| errors.iter().map(|e| e[i].abs()).fold(0.0, f64::max)),
            saturation_duty: on_bound as f64 / n as f64,
            bound_violations: used.iter().map(|t| t.thrusts.iter().filter(|&&u| u > hi || u < lo).count()).sum(),
            max_thrust: used.iter().flat_map(|t| t.thrusts.iter().copied()).fold(f64::NEG_INFINITY, f64::max),
            min_thrust: used.iter().flat_map(|t| t.thrusts.iter().copied()).fold(f64::INFINITY, f64::min),
            mean_solve_time: solve / n as f64,
            max_solve_time: used.iter().map(|t| t.diagnostics.solve_time).fold(0.0, f64::max),
        }
    }
}

/// Running sums updated once per tick.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    metrics_start: f64,
    lower: f64,
    upper: f64,
    n: usize,
    sq: f64,
    axis_sq: [f64; 3],
    max_error: f64,
    max_axis: [f64; 3],
    on_bound: usize,
    violations: usize,
    max_thrust: f64,
    min_thrust: f64,
    solve: f64,
    max_solve: f64,
}

impl MetricsAccumulator {
    pub fn new(metrics_start: f64, thrust_box: (f64, f64)) -> Self {
        Self {
            metrics_start,
            lower: thrust_box.0,
            upper: thrust_box.1,
            n: 0,
            sq: 0.0,
            axis_sq: [0.0; 3],
            max_error: 0.0,
            max_axis: [0.0; 3],
            on_bound: 0,
            violations: 0,
            max_thrust: f64::NEG_INFINITY,
            min_thrust: f64::INFINITY,
            solve: 0.0,
            max_solve: 0.0,
        }
    }

    pub fn push(&mut self, tick: &TickRecord) {
        if tick.time < self.metrics_start {
            return;
        }
        let e = tick.error();
        self.n += 1;
        self.sq += e.norm_squared();
        self.max_error = self.max_error.max(e.norm());
        for i in 0..3 {
            self.axis_sq[i] += e[i] * e[i];
            self.max_axis[i] = self.max_axis[i].max(e[i].abs());
        }
        if tick.thrusts.iter().any(|&u| u >= self.upper || u <= self.lower) {
            self.on_bound += 1;
        }
        for &u in tick.thrusts.iter() {
            if u > self.upper || u < self.lower {
                self.violations += 1;
            }
            self.max_thrust = self.max_thrust.max(u);
            self.min_thrust = self.min_thrust.min(u);
        }
        self.solve += tick.diagnostics.solve_time;
        self.max_solve = self.max_solve.max(tick.diagnostics.solve_time);
    }

    pub fn finish(&self) -> Metrics {
        if self.n == 0 {
            return Metrics::default();
        }
        let n = self.n as f64;
        Metrics {
            samples: self.n,
            rmse: (self.sq / n).sqrt(),
            max_error: self.max_error,
            rmse_axis: self.axis_sq.map(|s| (s / n).sqrt()),
            max_error_axis: self.max_axis,
            saturation_duty: self.on_bound as f64 / n,
            bound_violations: self.violations,
            max_thrust: self.max_thrust,
            min_thrust: self.min_thrust,
            mean_solve_time: self.solve / n,
            max_solve_time: self.max_solve,
        }
    }
}

pub const DIAGNOSTICS_HEADER: [&str; 20] = [
    "t",
    "ref_x",
    "ref_y",
    "ref_z",
    "px",
    "py",
    "pz",
    "u1",
    "u2",
    "u3",
    "u4",
    "L",
    "mass",
    "sqp_iterations",
    "qp_iterations",
    "kkt_residual",
    "active_bounds",
    "solve_time",
    "err_norm",
    "controller",
];

/// Per-tick log; floats are written in shortest round-trip form so
/// [`read_diagnostics_csv`] recovers them exactly.
pub fn write_diagnostics_csv<W: Write>(out: W, ticks: &[TickRecord], controller: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DIAGNOSTICS_HEADER)?;
    for t in ticks {
        let d = &t.diagnostics;
        let mut row: Vec<String> = vec![format_f64(t.time)];
        row.extend(t.reference.iter().chain(t.position.iter()).chain(t.thrusts.iter()).map(|v| format_f64(*v)));
        row.extend([
            format_f64(t.size),
            format_f64(t.mass),
            d.iterations.to_string(),
            d.qp_iterations.to_string(),
            format_f64(d.kkt_residual),
            d.active_bounds.to_string(),
            format_f64(d.solve_time),
            format_f64(t.error().norm()),
            controller.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diagnostics_csv<R: Read>(input: R) -> Result<Vec<TickRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let mut ticks = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse(format!("diagnostics row has no column {i}")))?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("column {}: {e}", DIAGNOSTICS_HEADER[i])))
        };
        let n = |i: usize| -> Result<usize> {
            rec.get(i)
                .ok_or_else(|| Error::Parse(format!("diagnostics row has no column {i}")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("column {}: {e}", DIAGNOSTICS_HEADER[i])))
        };
        ticks.push(TickRecord {
            time: f(0)?,
            reference: Vector3::new(f(1)?, f(2)?, f(3)?),
            position: Vector3::new(f(4)?, f(5)?, f(6)?),
            thrusts: Vector4::new(f(7)?, f(8)?, f(9)?, f(10)?),
            size: f(11)?,
            mass: f(12)?,
            diagnostics: TickDiagnostics {
                iterations: n(13)?,
                qp_iterations: n(14)?,
                kkt_residual: f(15)?,
                active_bounds: n(16)?,
                solve_time: f(17)?,
            },
        });
    }
    Ok(ticks)
}
