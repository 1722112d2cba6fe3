//! Exact derivative of one RK4 step, obtained by propagating the Jacobian of
//! the continuous dynamics through the four stages and the quaternion
//! normalization.

use nalgebra::{Matrix3, Matrix4, SMatrix, Vector4};

use super::{body_z, derivative_vector, ExternalWrench, StateVector};
use crate::geometry::VehicleProperties;
use crate::math::{quat_left, quat_right, skew};

type M13 = SMatrix<f64, 13, 13>;
type M13x4 = SMatrix<f64, 13, 4>;

/// Sensitivities of `x⁺ = rk4(x, u)` in packed 13-dimensional coordinates.
#[derive(Debug, Clone)]
pub struct StepJacobian {
    pub next: StateVector,
    pub wrt_state: M13,
    pub wrt_input: M13x4,
}

fn dbody_z_dq(q: &Vector4<f64>) -> SMatrix<f64, 3, 4> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    SMatrix::<f64, 3, 4>::new(
        2.0 * y,
        2.0 * z,
        2.0 * w,
        2.0 * x, //
        -2.0 * x,
        -2.0 * w,
        2.0 * z,
        2.0 * y, //
        2.0 * w,
        -2.0 * x,
        -2.0 * y,
        2.0 * z,
    )
}

fn continuous_jacobian(
    x: &StateVector,
    u: &Vector4<f64>,
    props: &VehicleProperties,
    w: &ExternalWrench,
) -> (M13, M13x4) {
    let q = x.fixed_rows::<4>(6).into_owned();
    let omega = x.fixed_rows::<3>(10).into_owned();
    let thrust = (props.allocation * u)[0];
    let inv_m = 1.0 / props.mass;

    let mut fx = M13::zeros();
    let mut fu = M13x4::zeros();
    // ṗ = v
    fx.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    // v̇ = (T z_B(q) + f - c_d v) / m + g
    fx.fixed_view_mut::<3, 4>(3, 6).copy_from(&(dbody_z_dq(&q) * (thrust * inv_m)));
    fx.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * (-w.drag_coefficient * inv_m)));
    let zb = body_z(&q) * inv_m;
    for j in 0..4 {
        fu.fixed_view_mut::<3, 1>(3, j).copy_from(&(zb * props.allocation[(0, j)]));
    }
    // q̇ = ½ q ⊗ (0, ω)
    let omega_q = Vector4::new(0.0, omega.x, omega.y, omega.z);
    fx.fixed_view_mut::<4, 4>(6, 6).copy_from(&(quat_right(&omega_q) * 0.5));
    let ql: Matrix4<f64> = quat_left(&q) * 0.5;
    fx.fixed_view_mut::<4, 3>(6, 10).copy_from(&ql.fixed_view::<4, 3>(0, 1));
    // ω̇ = J⁻¹ (τ - ω × Jω + τ_ext)
    let j = props.inertia;
    let gyro: Matrix3<f64> = -skew(&omega) * j + skew(&(j * omega));
    fx.fixed_view_mut::<3, 3>(10, 10).copy_from(&(props.inertia_inv * gyro));
    let torque_rows = props.allocation.fixed_view::<3, 4>(1, 0).into_owned();
    fu.fixed_view_mut::<3, 4>(10, 0).copy_from(&(props.inertia_inv * torque_rows));
    (fx, fu)
}

/// RK4 step and its exact Jacobian with respect to the packed state and the
/// rotor thrusts, including the final quaternion normalization.
pub fn rk4_jacobian(
    x: &StateVector,
    u: &Vector4<f64>,
    props: &VehicleProperties,
    w: &ExternalWrench,
    dt: f64,
) -> StepJacobian {
    let h = dt;
    let id = M13::identity();

    let k1 = derivative_vector(x, u, props, w);
    let (a1, b1) = continuous_jacobian(x, u, props, w);
    let (k1x, k1u) = (a1, b1);

    let x2 = x + k1 * (h / 2.0);
    let k2 = derivative_vector(&x2, u, props, w);
    let (a2, b2) = continuous_jacobian(&x2, u, props, w);
    let k2x = a2 * (id + k1x * (h / 2.0));
    let k2u = a2 * (k1u * (h / 2.0)) + b2;

    let x3 = x + k2 * (h / 2.0);
    let k3 = derivative_vector(&x3, u, props, w);
    let (a3, b3) = continuous_jacobian(&x3, u, props, w);
    let k3x = a3 * (id + k2x * (h / 2.0));
    let k3u = a3 * (k2u * (h / 2.0)) + b3;

    let x4 = x + k3 * h;
    let k4 = derivative_vector(&x4, u, props, w);
    let (a4, b4) = continuous_jacobian(&x4, u, props, w);
    let k4x = a4 * (id + k3x * h);
    let k4u = a4 * (k3u * h) + b4;

    let raw = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let mut phi_x = id + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
    let mut phi_u = (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);

    // q ← q̃ / |q̃|
    let q_raw = raw.fixed_rows::<4>(6).into_owned();
    let n = q_raw.norm();
    let q = q_raw / n;
    let normalize: Matrix4<f64> = (Matrix4::identity() - q * q.transpose()) / n;
    let rows_x = normalize * phi_x.fixed_rows::<4>(6);
    phi_x.fixed_rows_mut::<4>(6).copy_from(&rows_x);
    let rows_u = normalize * phi_u.fixed_rows::<4>(6);
    phi_u.fixed_rows_mut::<4>(6).copy_from(&rows_u);

    let mut next = raw;
    next.fixed_rows_mut::<4>(6).copy_from(&q);
    StepJacobian { next, wrt_state: phi_x, wrt_input: phi_u }
}

/// Maps a 12-dimensional error-coordinate perturbation
/// `(δp, δv, δθ, δω)` at `x` into packed-state coordinates.
pub(crate) fn tangent_to_packed(x: &StateVector) -> SMatrix<f64, 13, 12> {
    let mut m = SMatrix::<f64, 13, 12>::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&SMatrix::<f64, 6, 6>::identity());
    let ql = quat_left(&x.fixed_rows::<4>(6).into_owned()) * 0.5;
    m.fixed_view_mut::<4, 3>(6, 6).copy_from(&ql.fixed_view::<4, 3>(0, 1));
    m.fixed_view_mut::<3, 3>(10, 9).copy_from(&Matrix3::identity());
    m
}

/// Maps a packed-state perturbation at unit-quaternion state `x` into error
/// coordinates, `δθ = 2 vec(q⁻¹ ⊗ dq)`.
pub(crate) fn packed_to_tangent(x: &StateVector) -> SMatrix<f64, 12, 13> {
    let mut m = SMatrix::<f64, 12, 13>::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&SMatrix::<f64, 6, 6>::identity());
    let q = x.fixed_rows::<4>(6).into_owned();
    let conj = Vector4::new(q[0], -q[1], -q[2], -q[3]);
    let ql = quat_left(&conj) * 2.0;
    m.fixed_view_mut::<3, 4>(6, 6).copy_from(&ql.fixed_view::<3, 4>(1, 0));
    m.fixed_view_mut::<3, 3>(9, 10).copy_from(&Matrix3::identity());
    m
}
