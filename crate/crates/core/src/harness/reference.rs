//! Reference trajectories: the figure-8 benchmark, minimum-jerk waypoint
//! segments and hover holds. Attitude and body rates follow from the
//! flat outputs (position and a constant yaw).

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::GRAVITY;

/// Reference at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceSample {
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jerk: Vector3<f64>,
    pub yaw: f64,
    pub attitude: UnitQuaternion<f64>,
    /// Body-frame angular rate.
    pub angular_velocity: Vector3<f64>,
}

impl ReferenceSample {
    /// Completes position derivatives and a constant yaw into a full
    /// reference through differential flatness.
    pub fn from_flat_outputs(
        time: f64,
        position: Vector3<f64>,
        velocity: Vector3<f64>,
        acceleration: Vector3<f64>,
        jerk: Vector3<f64>,
        yaw: f64,
    ) -> Self {
        let (rot, rate) = flat_attitude(&acceleration, &jerk, yaw);
        Self {
            time,
            position,
            velocity,
            acceleration,
            jerk,
            yaw,
            attitude: UnitQuaternion::from_rotation_matrix(&rot),
            angular_velocity: rate,
        }
    }

    pub fn hover(time: f64, position: Vector3<f64>, yaw: f64) -> Self {
        Self::from_flat_outputs(time, position, Vector3::zeros(), Vector3::zeros(), Vector3::zeros(), yaw)
    }

    pub fn state(&self) -> State {
        State {
            position: self.position,
            velocity: self.velocity,
            attitude: self.attitude,
            angular_velocity: self.angular_velocity,
        }
    }

    /// Collective thrust that realizes the reference acceleration, N.
    pub fn collective_thrust(&self, mass: f64) -> f64 {
        mass * (self.acceleration + Vector3::new(0.0, 0.0, GRAVITY)).norm()
    }
}

/// Desired rotation with body z along `a + g`, heading `yaw`, and the body
/// rates implied by the jerk (constant yaw).
pub fn flat_attitude(acceleration: &Vector3<f64>, jerk: &Vector3<f64>, yaw: f64) -> (Rotation3<f64>, Vector3<f64>) {
    let f = acceleration + Vector3::new(0.0, 0.0, GRAVITY);
    let thrust = f.norm();
    let z_b = f / thrust;
    let rot = attitude_from_thrust_direction(&z_b, yaw);
    let x_b = rot.matrix().column(0).into_owned();
    let y_b = rot.matrix().column(1).into_owned();
    // ż_b = h; x_b and y_b follow the heading construction, which leaves a
    // small yaw rate r = −x_b · (ż_b × x_c) / |z_b × x_c|
    let h = (jerk - z_b * z_b.dot(jerk)) / thrust;
    let x_c = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let r = -x_b.dot(&h.cross(&x_c)) / z_b.cross(&x_c).norm();
    (rot, Vector3::new(-h.dot(&y_b), h.dot(&x_b), r))
}

/// Rotation whose third column is `z_b` and whose x axis points along the
/// heading `yaw` projected onto the plane normal to `z_b`.
pub fn attitude_from_thrust_direction(z_b: &Vector3<f64>, yaw: f64) -> Rotation3<f64> {
    let x_c = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let y_b = z_b.cross(&x_c).normalize();
    let x_b = y_b.cross(z_b);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x_b, y_b, *z_b]))
}

/// Lemniscate of Gerono `(A sin θ, A sin θ cos θ, z₀)` with `θ = ω t`
/// and ω chosen so that the peak speed equals `v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure8 {
    pub v_max: f64,
    /// Half-length along x, m; the footprint is `2A × A`.
    pub amplitude: f64,
    pub altitude: f64,
    pub yaw: f64,
}

impl Default for Figure8 {
    fn default() -> Self {
        Self { v_max: 2.5, amplitude: 2.0, altitude: 1.0, yaw: 0.0 }
    }
}

impl Figure8 {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0) || !(self.amplitude > 0.0) {
            return Err(Error::InvalidConfig("figure-8 needs v_max > 0 and amplitude > 0".into()));
        }
        Ok(())
    }

    /// Speed is `A ω sqrt(cos²θ + cos²2θ)`, largest (√2 A ω) at the crossing.
    pub fn angular_rate(&self) -> f64 {
        self.v_max / (std::f64::consts::SQRT_2 * self.amplitude)
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.angular_rate()
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        let a = self.amplitude;
        let w = self.angular_rate();
        let th = w * t;
        let (s, c) = th.sin_cos();
        let (s2, c2) = (2.0 * th).sin_cos();
        // y = A sinθ cosθ = (A/2) sin 2θ
        let position = Vector3::new(a * s, 0.5 * a * s2, self.altitude);
        let velocity = Vector3::new(a * w * c, a * w * c2, 0.0);
        let acceleration = Vector3::new(-a * w * w * s, -2.0 * a * w * w * s2, 0.0);
        let jerk = Vector3::new(-a * w.powi(3) * c, -4.0 * a * w.powi(3) * c2, 0.0);
        ReferenceSample::from_flat_outputs(t, position, velocity, acceleration, jerk, self.yaw)
    }
}

/// Reference sample of the figure-8 with default amplitude and altitude.
pub fn figure8_reference(v_max: f64, t: f64) -> ReferenceSample {
    Figure8 { v_max, ..Figure8::default() }.sample(t)
}

/// A rest-to-rest minimum-jerk move, or a hold when `from == to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub to: [f64; 3],
    pub duration: f64,
}

/// Piecewise waypoint trajectory starting at rest at `start`; holds the last
/// waypoint after the final segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoints {
    pub start: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    pub segments: Vec<Segment>,
}

impl Waypoints {
    pub fn hover(at: [f64; 3]) -> Self {
        Self { start: at, yaw: 0.0, segments: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.iter().any(|s| !(s.duration > 0.0)) {
            return Err(Error::InvalidConfig("waypoint segment durations must be > 0".into()));
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        let mut from = Vector3::from(self.start);
        let mut t0 = 0.0;
        for seg in &self.segments {
            let to = Vector3::from(seg.to);
            if t < t0 + seg.duration {
                let tau = ((t - t0) / seg.duration).max(0.0);
                let d = to - from;
                let tt = seg.duration;
                // s(τ) = 10τ³ − 15τ⁴ + 6τ⁵
                let s = tau.powi(3) * (10.0 - 15.0 * tau + 6.0 * tau * tau);
                let ds = 30.0 * tau * tau * (1.0 - tau).powi(2) / tt;
                let dds = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * tau * tau) / (tt * tt);
                let ddds = 60.0 * (1.0 - 6.0 * tau + 6.0 * tau * tau) / (tt * tt * tt);
                return ReferenceSample::from_flat_outputs(t, from + d * s, d * ds, d * dds, d * ddds, self.yaw);
            }
            from = to;
            t0 += seg.duration;
        }
        ReferenceSample::hover(t, from, self.yaw)
    }

    /// Time at which the path first reaches `x` along the world x axis,
    /// if it does.
    pub fn time_at_x(&self, x: f64) -> Option<f64> {
        let end: f64 = self.segments.iter().map(|s| s.duration).sum();
        let steps = 20_000;
        let mut prev = self.sample(0.0).position.x - x;
        for i in 1..=steps {
            let t = end * i as f64 / steps as f64;
            let cur = self.sample(t).position.x - x;
            if prev <= 0.0 && cur >= 0.0 || prev >= 0.0 && cur <= 0.0 {
                return Some(t);
            }
            prev = cur;
        }
        None
    }
}

/// Reference trajectory of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Trajectory {
    Figure8(Figure8),
    Waypoints(Waypoints),
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        match self {
            Trajectory::Figure8(f) => f.validate(),
            Trajectory::Waypoints(w) => w.validate(),
        }
    }

    pub fn sample(&self, t: f64) -> ReferenceSample {
        match self {
            Trajectory::Figure8(f) => f.sample(t),
            Trajectory::Waypoints(w) => w.sample(t),
        }
    }
}
