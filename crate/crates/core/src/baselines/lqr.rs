//! Infinite-horizon discrete LQR in wrench space (collective thrust and
//! body torques), re-linearized around the reference at every tick with the
//! current mass properties, then allocated to rotors and clamped.

use nalgebra::{DMatrix, SMatrix, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlInput, State};
use crate::error::{Error, Result};
use crate::geometry::VehicleProperties;
use crate::harness::reference::ReferenceSample;
use crate::nmpc::{linearize_dynamics, state_difference, Matrix12};

pub type Gain = SMatrix<f64, 4, 12>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    /// Diagonal of the 12×12 state weight (δp, δv, δθ, δω).
    pub q: [f64; 12],
    /// Diagonal of the wrench weight (T, τx, τy, τz).
    pub r: [f64; 4],
    /// Discretization period, s; the control period.
    pub period: f64,
    pub max_iterations: usize,
    /// Bound on the Riccati residual accepted as converged.
    pub residual_tolerance: f64,
    pub thrust_min: f64,
    pub thrust_max: f64,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            q: [10.0; 12],
            r: [1.0; 4],
            period: 0.01,
            max_iterations: 60,
            residual_tolerance: 1e-8,
            thrust_min: crate::THRUST_MIN,
            thrust_max: crate::THRUST_MAX,
        }
    }
}

impl LqrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q.iter().any(|v| !(*v >= 0.0)) || self.r.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidConfig("LQR needs Q ≥ 0 and R > 0".into()));
        }
        if !(self.period > 0.0) || self.max_iterations == 0 || !(self.thrust_min < self.thrust_max) {
            return Err(Error::InvalidConfig("LQR period, iteration limit or thrust box invalid".into()));
        }
        Ok(())
    }
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual `‖P − (AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA + Q)‖_max`.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let bt_p = b.transpose() * p;
    let s = r + &bt_p * b;
    let Some(k) = s.cholesky().map(|c| c.solve(&(&bt_p * a))) else {
        return f64::INFINITY;
    };
    let rhs = a.transpose() * p * a - a.transpose() * p * b * k + q;
    (p - rhs).amax()
}

/// Solves the DARE by the structure-preserving doubling algorithm and
/// polishes the result with a few Riccati recursions.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    max_iterations: usize,
    tolerance: f64,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let r_chol =
        r.clone().cholesky().ok_or_else(|| Error::Controller("LQR input weight is not positive definite".into()))?;
    let mut ak = a.clone();
    let mut gk = b * r_chol.solve(&b.transpose());
    let mut hk = q.clone();
    let mut iterations = 0;
    while iterations < max_iterations {
        iterations += 1;
        let w = (&id + &gk * &hk)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Controller("doubling step hit a singular matrix".into()))?;
        let w_a = &w * &ak;
        let next_h = &hk + ak.transpose() * &hk * &w_a;
        let next_g = &gk + &ak * &w * &gk * ak.transpose();
        let next_a = &ak * &w_a;
        let change = (&next_h - &hk).amax() / next_h.amax().max(1.0);
        hk = (&next_h + next_h.transpose()) * 0.5;
        gk = (&next_g + next_g.transpose()) * 0.5;
        ak = next_a;
        if !hk.iter().all(|v| v.is_finite()) {
            return Err(Error::Controller("Riccati iteration diverged".into()));
        }
        if change < 1e-15 {
            break;
        }
    }
    let mut p = hk;
    // a few plain recursions remove the rounding left by the doubling
    for _ in 0..3 {
        let bt_p = b.transpose() * &p;
        let s = r + &bt_p * b;
        let k = s
            .cholesky()
            .ok_or_else(|| Error::Controller("R + BᵀPB is not positive definite".into()))?
            .solve(&(&bt_p * a));
        let next = a.transpose() * &p * a - a.transpose() * &p * b * &k + q;
        p = (&next + next.transpose()) * 0.5;
    }
    let residual = dare_residual(a, b, q, r, &p);
    if !(residual < tolerance) {
        return Err(Error::Controller(format!(
            "Riccati equation not solved: residual {residual:.3e} after {iterations} doubling steps"
        )));
    }
    let bt_p = b.transpose() * &p;
    let gain = (r + &bt_p * b).cholesky().unwrap().solve(&(&bt_p * a));
    Ok(RiccatiSolution { p, gain, residual, iterations })
}

/// Wrench-space linearization at the reference: `A` (12×12) and `B_w`
/// (12×4) with `B_w = B_u H⁻¹`, plus the reference wrench.
pub fn linearize_at_reference(
    reference: &ReferenceSample,
    props: &VehicleProperties,
    period: f64,
) -> Result<(Matrix12, SMatrix<f64, 12, 4>, Vector4<f64>)> {
    let state = reference.state();
    let w = &reference.angular_velocity;
    let torque = w.cross(&(props.inertia * w));
    let wrench = Vector4::new(reference.collective_thrust(props.mass), torque.x, torque.y, torque.z);
    let u_ref = props.thrusts_for(&wrench);
    let lin = linearize_dynamics(&state, &u_ref, props, period)?;
    Ok((lin.a, lin.b * props.allocation_inv, wrench))
}

/// Feedback gain for the current properties around `reference`.
pub fn lqr_gain(
    reference: &ReferenceSample,
    props: &VehicleProperties,
    cfg: &LqrConfig,
) -> Result<(Gain, RiccatiSolution, Vector4<f64>)> {
    cfg.validate()?;
    let (a, b, wrench) = linearize_at_reference(reference, props, cfg.period)?;
    let a = DMatrix::from_iterator(12, 12, a.iter().copied());
    let b = DMatrix::from_iterator(12, 4, b.iter().copied());
    let q = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&cfg.q));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&cfg.r));
    let sol = solve_dare(&a, &b, &q, &r, cfg.max_iterations, cfg.residual_tolerance)?;
    let k = Gain::from_iterator(sol.gain.iter().copied());
    Ok((k, sol, wrench))
}

/// `w = w_ref − K (x ⊖ x_ref)`, allocated through `H⁻¹` and clamped.
pub fn lqr_control(
    x: &State,
    reference: &ReferenceSample,
    props: &VehicleProperties,
    cfg: &LqrConfig,
) -> Result<ControlInput> {
    let (k, _, wrench_ref) = lqr_gain(reference, props, cfg)?;
    let dx = state_difference(x, &reference.state());
    let wrench = wrench_ref - k * dx;
    let raw = props.thrusts_for(&wrench);
    if !raw.iter().all(|t| t.is_finite()) {
        return Err(Error::Allocation("LQR allocation produced non-finite thrusts".into()));
    }
    Ok(ControlInput::new(raw).clamped(cfg.thrust_min, cfg.thrust_max))
}
