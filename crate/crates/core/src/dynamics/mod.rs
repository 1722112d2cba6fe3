//! Rigid-body model of the quadrotor with time-variant mass properties.
//!
//! The body frame is fixed at the geometric center, the position state is
//! the COG position in the world frame (z up) and the attitude quaternion
//! maps body vectors into the world frame. Rotor thrusts act instantly; mass
//! properties are held constant over an integration step.

mod jacobian;
pub mod log;

pub(crate) use jacobian::{packed_to_tangent, tangent_to_packed};
pub use jacobian::{rk4_jacobian, StepJacobian};

use nalgebra::{Matrix4, SVector, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VehicleProperties;
use crate::math::{quat_right, quat_to_vec};
use crate::GRAVITY;

/// Packed state `[p, v, q(w,x,y,z), ω]` used by the integrator.
pub type StateVector = SVector<f64, 13>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// world←body rotation
    pub attitude: UnitQuaternion<f64>,
    /// body-frame angular rate
    pub angular_velocity: Vector3<f64>,
}

impl Default for State {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

impl State {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.position);
        x.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        x.fixed_rows_mut::<4>(6).copy_from(&quat_to_vec(&self.attitude));
        x.fixed_rows_mut::<3>(10).copy_from(&self.angular_velocity);
        x
    }

    /// Unpacks a state vector, renormalizing the quaternion.
    pub fn from_vector(x: &StateVector) -> Self {
        Self {
            position: x.fixed_rows::<3>(0).into_owned(),
            velocity: x.fixed_rows::<3>(3).into_owned(),
            attitude: crate::math::vec_to_quat(&x.fixed_rows::<4>(6).into_owned()),
            angular_velocity: x.fixed_rows::<3>(10).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Per-rotor thrusts, N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub thrusts: Vector4<f64>,
}

impl ControlInput {
    pub fn new(thrusts: Vector4<f64>) -> Self {
        Self { thrusts }
    }

    /// Element-wise clamp onto `[lower, upper]`.
    pub fn clamped(&self, lower: f64, upper: f64) -> Self {
        Self { thrusts: self.thrusts.map(|t| t.clamp(lower, upper)) }
    }

    pub fn within(&self, lower: f64, upper: f64) -> bool {
        self.thrusts.iter().all(|t| *t >= lower && *t <= upper)
    }
}

/// Disturbance acting on the vehicle. The force is expressed in the world
/// frame, the torque in the body frame; `drag_coefficient` adds `-c_d v`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExternalWrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub drag_coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// dq/dt as a `(w, x, y, z)` 4-vector
    pub attitude_rate: Vector4<f64>,
    pub angular_acceleration: Vector3<f64>,
}

/// Collective thrust and body torques `(T, τ) = H t`.
pub fn wrench_from_thrusts(u: &ControlInput, allocation: &Matrix4<f64>) -> (f64, Vector3<f64>) {
    let w = allocation * u.thrusts;
    (w[0], Vector3::new(w[1], w[2], w[3]))
}

/// Rotor speed that produces thrust `thrust` with coefficient `k_t`.
pub fn rotor_speed(thrust: f64, thrust_coefficient: f64) -> Result<f64> {
    if thrust < 0.0 || !thrust.is_finite() {
        return Err(Error::Domain(format!("rotor thrust must be >= 0, got {thrust}")));
    }
    if !(thrust_coefficient > 0.0) {
        return Err(Error::Domain("thrust coefficient must be > 0".into()));
    }
    Ok((thrust / thrust_coefficient).sqrt())
}

/// Body z axis in world coordinates, written so that it is a homogeneous
/// quadratic in the (possibly unnormalized) quaternion components.
pub(crate) fn body_z(q: &Vector4<f64>) -> Vector3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Vector3::new(2.0 * (x * z + w * y), 2.0 * (y * z - w * x), w * w - x * x - y * y + z * z)
}

pub(crate) fn derivative_vector(
    x: &StateVector,
    u: &Vector4<f64>,
    props: &VehicleProperties,
    w: &ExternalWrench,
) -> StateVector {
    let v = x.fixed_rows::<3>(3).into_owned();
    let q = x.fixed_rows::<4>(6).into_owned();
    let omega = x.fixed_rows::<3>(10).into_owned();
    let wrench = props.allocation * u;
    let torque = Vector3::new(wrench[1], wrench[2], wrench[3]);

    let force = body_z(&q) * wrench[0] + w.force - v * w.drag_coefficient;
    let accel = force / props.mass - Vector3::new(0.0, 0.0, GRAVITY);
    let q_dot = quat_right(&Vector4::new(0.0, omega.x, omega.y, omega.z)) * q * 0.5;
    let j_omega = props.inertia * omega;
    let omega_dot = props.inertia_inv * (torque - omega.cross(&j_omega) + w.torque);

    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&v);
    dx.fixed_rows_mut::<3>(3).copy_from(&accel);
    dx.fixed_rows_mut::<4>(6).copy_from(&q_dot);
    dx.fixed_rows_mut::<3>(10).copy_from(&omega_dot);
    dx
}

/// Continuous-time dynamics: translational Newton equation with gravity and
/// external force, quaternion kinematics `q̇ = ½ q ⊗ (0, ω_B)`, and Euler's
/// rotation equation.
pub fn state_derivative(x: &State, u: &ControlInput, props: &VehicleProperties, w: &ExternalWrench) -> StateDerivative {
    let d = derivative_vector(&x.to_vector(), &u.thrusts, props, w);
    StateDerivative {
        velocity: d.fixed_rows::<3>(0).into_owned(),
        acceleration: d.fixed_rows::<3>(3).into_owned(),
        attitude_rate: d.fixed_rows::<4>(6).into_owned(),
        angular_acceleration: d.fixed_rows::<3>(10).into_owned(),
    }
}

pub(crate) fn rk4_vector(
    x: &StateVector,
    u: &Vector4<f64>,
    props: &VehicleProperties,
    w: &ExternalWrench,
    dt: f64,
) -> StateVector {
    let k1 = derivative_vector(x, u, props, w);
    let k2 = derivative_vector(&(x + k1 * (dt / 2.0)), u, props, w);
    let k3 = derivative_vector(&(x + k2 * (dt / 2.0)), u, props, w);
    let k4 = derivative_vector(&(x + k3 * dt), u, props, w);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// One classical Runge-Kutta step followed by quaternion renormalization.
pub fn step_rk4(x: &State, u: &ControlInput, props: &VehicleProperties, w: &ExternalWrench, dt: f64) -> Result<State> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be > 0, got {dt}")));
    }
    let next = rk4_vector(&x.to_vector(), &u.thrusts, props, w, dt);
    if !next.iter().all(|v| v.is_finite()) || next.fixed_rows::<4>(6).norm() < 1e-9 {
        return Err(Error::IntegrationDiverged { time: f64::NAN });
    }
    Ok(State::from_vector(&next))
}
