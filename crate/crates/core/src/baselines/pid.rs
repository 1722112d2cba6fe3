//! Geometric cascade controller: position/velocity PD with acceleration
//! feedforward produces a thrust vector, the attitude loop turns the
//! attitude error into a body-rate command and the rate loop into an
//! angular-acceleration command, scaled by J.
//!
//! The attitude and rate gains are time constants (s): with `K_R` and
//! `K_ω` the loop is `τ = J(−e_R / (K_R K_ω) − e_ω / K_ω) + ω × Jω`.
//! They are fixed, so the loop is never retuned as the vehicle morphs.

use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, State};
use crate::error::{Error, Result};
use crate::geometry::VehicleProperties;
use crate::harness::reference::{attitude_from_thrust_direction, ReferenceSample};
use crate::GRAVITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidGains {
    pub k_p: [f64; 3],
    pub k_v: [f64; 3],
    /// Attitude time constants, s.
    pub k_r: [f64; 3],
    /// Rate time constants, s.
    pub k_omega: [f64; 3],
    pub thrust_min: f64,
    pub thrust_max: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            k_p: [2.0; 3],
            k_v: [2.2; 3],
            k_r: [0.25; 3],
            k_omega: [0.23; 3],
            thrust_min: crate::THRUST_MIN,
            thrust_max: crate::THRUST_MAX,
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        let all = self.k_p.iter().chain(&self.k_v).chain(&self.k_r).chain(&self.k_omega);
        if all.clone().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidConfig("PID gains must be > 0".into()));
        }
        if !(self.thrust_min < self.thrust_max) {
            return Err(Error::InvalidConfig("PID thrust_min must be < thrust_max".into()));
        }
        Ok(())
    }
}

/// Intermediate quantities of one PID evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidOutput {
    pub desired_acceleration: Vector3<f64>,
    /// Collective thrust T and body torque τ before allocation.
    pub wrench: Vector4<f64>,
    pub input: ControlInput,
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

pub fn pid_evaluate(
    x: &State,
    reference: &ReferenceSample,
    props: &VehicleProperties,
    gains: &PidGains,
) -> Result<PidOutput> {
    let k = |g: [f64; 3]| Matrix3::from_diagonal(&Vector3::from(g));
    let e_p = reference.position - x.position;
    let e_v = reference.velocity - x.velocity;
    let a_des = k(gains.k_p) * e_p + k(gains.k_v) * e_v + reference.acceleration;
    let f_des = a_des + Vector3::new(0.0, 0.0, GRAVITY);

    let rot = x.attitude.to_rotation_matrix();
    let r = rot.matrix();
    let z_b = r.column(2).into_owned();
    let thrust = props.mass * f_des.dot(&z_b);

    let f_norm = f_des.norm();
    let z_d = if f_norm > 1e-9 { f_des / f_norm } else { Vector3::z() };
    let r_d = attitude_from_thrust_direction(&z_d, reference.yaw).into_inner();
    let e_r = 0.5 * vee(&(r_d.transpose() * r - r.transpose() * r_d));
    // desired rates are expressed in the desired frame; map them into ours
    let omega_d = r.transpose() * r_d * reference.angular_velocity;
    let e_w = x.angular_velocity - omega_d;

    let inv = |g: [f64; 3]| Vector3::new(1.0 / g[0], 1.0 / g[1], 1.0 / g[2]);
    let k_att = inv(gains.k_r).component_mul(&inv(gains.k_omega));
    let k_rate = inv(gains.k_omega);
    let alpha = -k_att.component_mul(&e_r) - k_rate.component_mul(&e_w);
    let w = x.angular_velocity;
    let torque = props.inertia * alpha + w.cross(&(props.inertia * w));

    let wrench = Vector4::new(thrust, torque.x, torque.y, torque.z);
    let raw = props.thrusts_for(&wrench);
    if !raw.iter().all(|t| t.is_finite()) {
        return Err(Error::Allocation("PID allocation produced non-finite thrusts".into()));
    }
    let input = ControlInput::new(raw).clamped(gains.thrust_min, gains.thrust_max);
    Ok(PidOutput { desired_acceleration: a_des, wrench, input })
}

/// Box-clamped rotor thrusts of the cascade.
pub fn pid_control(
    x: &State,
    reference: &ReferenceSample,
    props: &VehicleProperties,
    gains: &PidGains,
) -> Result<ControlInput> {
    Ok(pid_evaluate(x, reference, props, gains)?.input)
}
