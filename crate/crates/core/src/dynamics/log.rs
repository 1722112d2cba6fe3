//! Trajectory log in CSV form.

use std::io::Write;

use nalgebra::Vector4;

use super::State;
use crate::error::Result;

pub const TRAJECTORY_HEADER: [&str; 19] =
    ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "t1", "t2", "t3", "t4", "L"];

/// One logged simulation sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub state: State,
    pub thrusts: Vector4<f64>,
    pub size: f64,
}

impl TrajectorySample {
    pub fn fields(&self) -> [f64; 19] {
        let s = &self.state;
        let q = s.attitude;
        [
            self.time,
            s.position.x,
            s.position.y,
            s.position.z,
            s.velocity.x,
            s.velocity.y,
            s.velocity.z,
            q.w,
            q.i,
            q.j,
            q.k,
            s.angular_velocity.x,
            s.angular_velocity.y,
            s.angular_velocity.z,
            self.thrusts[0],
            self.thrusts[1],
            self.thrusts[2],
            self.thrusts[3],
            self.size,
        ]
    }
}

/// Shortest text that parses back to the same `f64`; very small or large
/// magnitudes use exponent notation.
pub fn format_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

/// Writes samples with the standard trajectory header. When `controller` is
/// given, a trailing `controller` column carries its name on every row.
pub fn write_trajectory_csv<W: Write>(out: W, samples: &[TrajectorySample], controller: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    if controller.is_some() {
        header.push("controller");
    }
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(20);
    for s in samples {
        record.clear();
        record.extend(s.fields().iter().map(|v| format_f64(*v)));
        if let Some(name) = controller {
            record.push(name.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
