//! Small rotation helpers shared by the model and the controllers.
//!
//! Quaternions are Hamilton, scalar-first, and represent the world←body
//! rotation. Attitude perturbations are applied on the body side:
//! `q ⊕ δ = q ⊗ Exp(δ)`.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3, Vector4};

/// Cross-product matrix `[v]ₓ` such that `[v]ₓ w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Parallel-axis term `-m [r]ₓ²` that moves an inertia tensor from a body's
/// own COG to a reference point displaced by `-r`.
pub fn parallel_axis(mass: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    let s = skew(r);
    -(s * s) * mass
}

pub fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Quaternion as `(w, x, y, z)` 4-vector.
pub fn quat_to_vec(q: &UnitQuaternion<f64>) -> Vector4<f64> {
    Vector4::new(q.w, q.i, q.j, q.k)
}

/// Builds a unit quaternion from a `(w, x, y, z)` 4-vector, normalizing it.
pub fn vec_to_quat(v: &Vector4<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]))
}

/// Left-multiplication matrix: `quat_left(p) * q == p ⊗ q` on `(w,x,y,z)` vectors.
pub fn quat_left(p: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (p[0], p[1], p[2], p[3]);
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, -z, y, //
        y, z, w, -x, //
        z, -y, x, w,
    )
}

/// Right-multiplication matrix: `quat_right(p) * q == q ⊗ p`.
pub fn quat_right(p: &Vector4<f64>) -> Matrix4<f64> {
    let (w, x, y, z) = (p[0], p[1], p[2], p[3]);
    Matrix4::new(
        w, -x, -y, -z, //
        x, w, z, -y, //
        y, -z, w, x, //
        z, y, -x, w,
    )
}

/// Rotation vector → unit quaternion.
pub fn exp_map(delta: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*delta)
}

/// Unit quaternion → rotation vector, taking the shortest rotation.
pub fn log_map(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = if q.w < 0.0 { UnitQuaternion::new_unchecked(-q.into_inner()) } else { *q };
    q.scaled_axis()
}

/// Body-side attitude difference `Log(b⁻¹ ⊗ a)`.
pub fn attitude_difference(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> Vector3<f64> {
    log_map(&(b.inverse() * a))
}

/// True when the matrix is symmetric to within `tol` (max-abs).
pub fn is_symmetric(m: &Matrix3<f64>, tol: f64) -> bool {
    (m - m.transpose()).amax() <= tol
}

/// Principal moments must be non-negative and satisfy the triangle
/// inequality `Iₐ + I_b ≥ I_c` for every permutation.
pub fn satisfies_triangle_inequality(moments: &Vector3<f64>, tol: f64) -> bool {
    let (a, b, c) = (moments[0], moments[1], moments[2]);
    a >= -tol && b >= -tol && c >= -tol && a + b >= c - tol && a + c >= b - tol && b + c >= a - tol
}

/// Eigenvalues of a symmetric 3×3 matrix in ascending order.
pub fn principal_moments(j: &Matrix3<f64>) -> Vector3<f64> {
    let sym = (j + j.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Vector3::new(ev[0], ev[1], ev[2])
}
