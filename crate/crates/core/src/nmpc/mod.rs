//! Box-constrained NMPC for the morphing quadrotor.
//!
//! Each solve tracks a window of reference states with rotor thrusts as
//! decision variables, using the mass properties of the current size over
//! the whole horizon. The problem is a multiple-shooting transcription
//! of the RK4-discretized model, solved by Gauss-Newton SQP; in closed loop
//! it is run as a real-time iteration (one SQP step per tick, warm-started
//! from the shifted previous solution).

pub mod ocp;
pub mod qp;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{packed_to_tangent, tangent_to_packed};
use crate::dynamics::{rk4_jacobian, step_rk4, ControlInput, ExternalWrench, State};
use crate::error::{Error, Result};
use crate::geometry::VehicleProperties;
use crate::math::{attitude_difference, exp_map, skew};
use crate::GRAVITY;
use ocp::{Linearization, OcpSettings, OcpWeights, ShootingModel};

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Matrix12x4 = SMatrix<f64, 12, 4>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmpcConfig {
    pub horizon: usize,
    /// Shooting interval, s.
    pub dt: f64,
    /// RK4 steps per shooting interval.
    pub substeps: usize,
    pub q_position: [f64; 3],
    pub q_velocity: [f64; 3],
    pub q_attitude: [f64; 3],
    pub q_rate: [f64; 3],
    /// Terminal weights as multiples of the stage weights.
    pub terminal_scale: f64,
    pub r_thrust: [f64; 4],
    pub thrust_min: f64,
    pub thrust_max: f64,
    /// SQP iterations per solve; 1 is the real-time iteration.
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    /// Linear drag assumed by the prediction model.
    pub drag_coefficient: f64,
    /// Use the thrusts of the reference wrench instead of hover thrusts as
    /// the input reference.
    pub feedforward_inputs: bool,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            dt: 0.05,
            substeps: 1,
            q_position: [200.0; 3],
            q_velocity: [1.0; 3],
            q_attitude: [100.0; 3],
            q_rate: [1.0; 3],
            terminal_scale: 1.0,
            r_thrust: [1.0; 4],
            thrust_min: crate::THRUST_MIN,
            thrust_max: crate::THRUST_MAX,
            max_iterations: 1,
            kkt_tolerance: 1e-6,
            drag_coefficient: 0.0,
            feedforward_inputs: true,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = self.q_position.iter().chain(&self.q_velocity).chain(&self.q_attitude).chain(&self.q_rate);
        if weights.clone().any(|w| !(*w >= 0.0)) || self.r_thrust.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidConfig("NMPC weights must be ≥ 0 (Q) and > 0 (R)".into()));
        }
        if self.horizon == 0 || !(self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::InvalidConfig("NMPC horizon, dt and substeps must be positive".into()));
        }
        if !(self.thrust_min < self.thrust_max) || self.thrust_min < 0.0 {
            return Err(Error::InvalidConfig("NMPC needs 0 ≤ thrust_min < thrust_max".into()));
        }
        if !(self.terminal_scale >= 0.0) || !(self.kkt_tolerance > 0.0) {
            return Err(Error::InvalidConfig("NMPC terminal_scale and kkt_tolerance out of range".into()));
        }
        Ok(())
    }

    pub fn stage_weight(&self) -> Matrix12 {
        let mut d = [0.0; 12];
        d[0..3].copy_from_slice(&self.q_position);
        d[3..6].copy_from_slice(&self.q_velocity);
        d[6..9].copy_from_slice(&self.q_attitude);
        d[9..12].copy_from_slice(&self.q_rate);
        Matrix12::from_diagonal(&SMatrix::<f64, 12, 1>::from_column_slice(&d))
    }

    pub fn input_weight(&self) -> nalgebra::Matrix4<f64> {
        nalgebra::Matrix4::from_diagonal(&Vector4::from(self.r_thrust))
    }

    pub fn weights(&self) -> OcpWeights {
        let q = self.stage_weight();
        OcpWeights {
            stage: DMatrix::from_iterator(12, 12, q.iter().copied()),
            terminal: DMatrix::from_iterator(12, 12, (q * self.terminal_scale).iter().copied()),
            input: DMatrix::from_iterator(4, 4, self.input_weight().iter().copied()),
        }
    }

    pub fn settings(&self) -> OcpSettings {
        OcpSettings {
            horizon: self.horizon,
            input_lower: DVector::from_element(4, self.thrust_min),
            input_upper: DVector::from_element(4, self.thrust_max),
            max_iterations: self.max_iterations,
            tolerance: self.kkt_tolerance,
        }
    }
}

/// Reference states at the `N + 1` shooting nodes and reference thrusts
/// for the `N` intervals.
#[derive(Debug, Clone)]
pub struct ReferenceWindow {
    pub states: Vec<State>,
    pub inputs: Vec<Vector4<f64>>,
}

impl ReferenceWindow {
    /// Reference inputs default to the hover thrusts of `props`.
    pub fn with_hover_inputs(states: Vec<State>, props: &VehicleProperties) -> Self {
        let n = states.len().saturating_sub(1);
        Self { states, inputs: vec![props.hover_thrusts(GRAVITY); n] }
    }

    /// Hold `target` over a horizon of `n` intervals.
    pub fn constant(target: State, props: &VehicleProperties, n: usize) -> Self {
        Self::with_hover_inputs(vec![target; n + 1], props)
    }
}

#[derive(Debug, Clone)]
pub struct NmpcSolution {
    pub inputs: Vec<Vector4<f64>>,
    pub states: Vec<State>,
    pub kkt_residual: f64,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub qp_iterations: usize,
    pub active_bounds: usize,
    pub solve_time: Duration,
}

impl NmpcSolution {
    /// First thrust command of the plan.
    pub fn command(&self) -> ControlInput {
        ControlInput::new(self.inputs[0])
    }

    /// Warm start for a solve `elapsed` seconds later: the input plan is
    /// interpolated on the shifted grid (last input held) and the nodes are
    /// re-simulated from `x_now`.
    pub fn shifted(
        &self,
        elapsed: f64,
        x_now: &State,
        props: &VehicleProperties,
        cfg: &NmpcConfig,
    ) -> Result<NmpcSolution> {
        let n = cfg.horizon;
        let last = self.inputs.len() - 1;
        let inputs: Vec<Vector4<f64>> = (0..n)
            .map(|k| {
                let s = (elapsed / cfg.dt + k as f64).max(0.0);
                let i = s.floor() as usize;
                if i >= last {
                    self.inputs[last]
                } else {
                    let f = s - i as f64;
                    self.inputs[i] * (1.0 - f) + self.inputs[i + 1] * f
                }
            })
            .collect();
        let model = QuadrotorModel::new(props, cfg);
        let dyn_inputs: Vec<DVector<f64>> = inputs.iter().map(to_dvector).collect();
        let states = ocp::rollout(&model, x_now, &dyn_inputs)?;
        Ok(NmpcSolution { inputs, states, ..self.clone() })
    }
}

/// Attitude error `vec(q⁻¹ ⊗ q_r)`, sign-fixed so the scalar part of the
/// error quaternion is non-negative (the shorter of the two rotations).
pub fn quaternion_error(q: &UnitQuaternion<f64>, q_ref: &UnitQuaternion<f64>) -> Result<Vector3<f64>> {
    for (label, v) in [("q", q), ("q_ref", q_ref)] {
        let n = v.as_ref().norm();
        if !((n - 1.0).abs() < 1e-6) {
            return Err(Error::Domain(format!("{label} is not a unit quaternion (norm {n})")));
        }
    }
    let e = q.inverse() * q_ref;
    let s = if e.w < 0.0 { -1.0 } else { 1.0 };
    Ok(e.imag() * s)
}

/// Jacobian of [`quaternion_error`] with respect to a body-frame
/// perturbation `q ← q ⊗ Exp(δ)`.
fn quaternion_error_jacobian(q: &UnitQuaternion<f64>, q_ref: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let e = q.inverse() * q_ref;
    let s = if e.w < 0.0 { -1.0 } else { 1.0 };
    (Matrix3::identity() * e.w - skew(&e.imag())) * (-0.5 * s)
}

/// Tracking error `(p - p_r, v - v_r, e_q, ω - ω_r)`.
pub fn tracking_error(x: &State, reference: &State) -> Result<SMatrix<f64, 12, 1>> {
    let mut r = SMatrix::<f64, 12, 1>::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&(x.position - reference.position));
    r.fixed_rows_mut::<3>(3).copy_from(&(x.velocity - reference.velocity));
    r.fixed_rows_mut::<3>(6).copy_from(&quaternion_error(&x.attitude, &reference.attitude)?);
    r.fixed_rows_mut::<3>(9).copy_from(&(x.angular_velocity - reference.angular_velocity));
    Ok(r)
}

/// `a ⊖ b = (p_a - p_b, v_a - v_b, Log(q_b⁻¹ q_a), ω_a - ω_b)`.
pub fn state_difference(a: &State, b: &State) -> SMatrix<f64, 12, 1> {
    let mut d = SMatrix::<f64, 12, 1>::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&(a.position - b.position));
    d.fixed_rows_mut::<3>(3).copy_from(&(a.velocity - b.velocity));
    d.fixed_rows_mut::<3>(6).copy_from(&attitude_difference(&a.attitude, &b.attitude));
    d.fixed_rows_mut::<3>(9).copy_from(&(a.angular_velocity - b.angular_velocity));
    d
}

/// `x ⊕ δ = (p + δp, v + δv, q ⊗ Exp(δθ), ω + δω)`.
pub fn state_retract(x: &State, delta: &SMatrix<f64, 12, 1>) -> State {
    State {
        position: x.position + delta.fixed_rows::<3>(0),
        velocity: x.velocity + delta.fixed_rows::<3>(3),
        attitude: x.attitude * exp_map(&delta.fixed_rows::<3>(6).into_owned()),
        angular_velocity: x.angular_velocity + delta.fixed_rows::<3>(9),
    }
}

/// One shooting interval and its sensitivities in error coordinates.
#[derive(Debug, Clone)]
pub struct IntervalLinearization {
    pub next: State,
    pub a: Matrix12,
    pub b: Matrix12x4,
}

impl IntervalLinearization {
    /// Continuity defect `F(x_k, u_k) ⊖ x_{k+1}`.
    pub fn defect(&self, node: &State) -> SMatrix<f64, 12, 1> {
        state_difference(&self.next, node)
    }
}

/// Linearizes one shooting interval of length `dt` (a single RK4 step).
pub fn linearize_dynamics(
    x: &State,
    u: &Vector4<f64>,
    props: &VehicleProperties,
    dt: f64,
) -> Result<IntervalLinearization> {
    linearize_interval(x, u, props, &ExternalWrench::default(), dt, 1)
}

fn linearize_interval(
    x: &State,
    u: &Vector4<f64>,
    props: &VehicleProperties,
    w: &ExternalWrench,
    dt: f64,
    substeps: usize,
) -> Result<IntervalLinearization> {
    if !(dt > 0.0) || substeps == 0 {
        return Err(Error::Domain(format!("interval must be > 0, got {dt} with {substeps} substeps")));
    }
    let h = dt / substeps as f64;
    let start = x.to_vector();
    let mut packed = start;
    let mut phi_x = SMatrix::<f64, 13, 13>::identity();
    let mut phi_u = SMatrix::<f64, 13, 4>::zeros();
    for _ in 0..substeps {
        let step = rk4_jacobian(&packed, u, props, w, h);
        phi_u = step.wrt_state * phi_u + step.wrt_input;
        phi_x = step.wrt_state * phi_x;
        packed = step.next;
    }
    if !packed.iter().all(|v| v.is_finite()) {
        return Err(Error::SolverFailure("prediction model diverged".into()));
    }
    let out = packed_to_tangent(&packed);
    Ok(IntervalLinearization {
        next: State::from_vector(&packed),
        a: out * phi_x * tangent_to_packed(&start),
        b: out * phi_u,
    })
}

/// The quadrotor as a [`ShootingModel`] with frozen mass properties.
pub struct QuadrotorModel<'a> {
    pub props: &'a VehicleProperties,
    pub wrench: ExternalWrench,
    pub dt: f64,
    pub substeps: usize,
}

impl<'a> QuadrotorModel<'a> {
    pub fn new(props: &'a VehicleProperties, cfg: &NmpcConfig) -> Self {
        Self {
            props,
            wrench: ExternalWrench { drag_coefficient: cfg.drag_coefficient, ..ExternalWrench::default() },
            dt: cfg.dt,
            substeps: cfg.substeps,
        }
    }
}

fn to_vector4(u: &DVector<f64>) -> Vector4<f64> {
    Vector4::new(u[0], u[1], u[2], u[3])
}

fn to_dvector(u: &Vector4<f64>) -> DVector<f64> {
    DVector::from_column_slice(u.as_slice())
}

impl ShootingModel for QuadrotorModel<'_> {
    type State = State;

    fn state_dim(&self) -> usize {
        12
    }

    fn input_dim(&self) -> usize {
        4
    }

    fn simulate(&self, x: &State, u: &DVector<f64>) -> Result<State> {
        let u = ControlInput::new(to_vector4(u));
        let h = self.dt / self.substeps as f64;
        let mut s = *x;
        for _ in 0..self.substeps {
            s = step_rk4(&s, &u, self.props, &self.wrench, h)?;
        }
        Ok(s)
    }

    fn linearize(&self, x: &State, u: &DVector<f64>) -> Result<Linearization<State>> {
        let lin = linearize_interval(x, &to_vector4(u), self.props, &self.wrench, self.dt, self.substeps)?;
        Ok(Linearization {
            next: lin.next,
            a: DMatrix::from_iterator(12, 12, lin.a.iter().copied()),
            b: DMatrix::from_iterator(12, 4, lin.b.iter().copied()),
        })
    }

    fn difference(&self, a: &State, b: &State) -> DVector<f64> {
        DVector::from_column_slice(state_difference(a, b).as_slice())
    }

    fn retract(&self, x: &State, delta: &DVector<f64>) -> State {
        state_retract(x, &SMatrix::<f64, 12, 1>::from_column_slice(delta.as_slice()))
    }

    fn tracking_residual(&self, x: &State, reference: &State) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let r = tracking_error(x, reference)?;
        let mut e = DMatrix::identity(12, 12);
        let jq = quaternion_error_jacobian(&x.attitude, &reference.attitude);
        e.view_mut((6, 6), (3, 3)).copy_from(&jq);
        Ok((DVector::from_column_slice(r.as_slice()), e))
    }
}

/// Objective of a plan: `Σ δxᵀQδx + δuᵀRδu` over the stages plus the
/// terminal term, with `δx` the [`tracking_error`].
pub fn cost(states: &[State], inputs: &[Vector4<f64>], reference: &ReferenceWindow, cfg: &NmpcConfig) -> Result<f64> {
    if states.len() != inputs.len() + 1
        || reference.states.len() != states.len()
        || reference.inputs.len() != inputs.len()
    {
        return Err(Error::Domain("plan and reference lengths disagree".into()));
    }
    let q = cfg.stage_weight();
    let r = cfg.input_weight();
    let mut total = 0.0;
    for (k, x) in states.iter().enumerate() {
        let e = tracking_error(x, &reference.states[k])?;
        let scale = if k == inputs.len() { cfg.terminal_scale } else { 1.0 };
        total += scale * (e.transpose() * q * e)[0];
        if k < inputs.len() {
            let du = inputs[k] - reference.inputs[k];
            total += (du.transpose() * r * du)[0];
        }
    }
    Ok(total)
}

/// Solves the tracking problem from the measured state `x_now`.
///
/// Mass properties in `props` are held over the horizon. Without a warm
/// start the SQP starts from a rollout of the (clamped) reference inputs.
/// Returns [`Error::SolverFailure`] when the linearization or the QP breaks
/// down; hitting the iteration limit is not an error, the remaining KKT
/// residual is reported in the solution.
pub fn solve(
    x_now: &State,
    reference: &ReferenceWindow,
    props: &VehicleProperties,
    cfg: &NmpcConfig,
    warm_start: Option<&NmpcSolution>,
) -> Result<NmpcSolution> {
    cfg.validate()?;
    if !x_now.is_finite() {
        return Err(Error::SolverFailure("measured state is not finite".into()));
    }
    let started = Instant::now();
    let model = QuadrotorModel::new(props, cfg);
    let input_refs: Vec<DVector<f64>> = reference.inputs.iter().map(to_dvector).collect();
    let warm_inputs: Option<Vec<DVector<f64>>> = warm_start.map(|w| w.inputs.iter().map(to_dvector).collect());
    let warm = match (warm_start, warm_inputs.as_ref()) {
        (Some(w), Some(us)) => Some((w.states.as_slice(), us.as_slice())),
        _ => None,
    };
    let sol = ocp::solve_ocp(&model, x_now, &reference.states, &input_refs, &cfg.weights(), &cfg.settings(), warm)
        .map_err(|e| match e {
            Error::SolverFailure(msg) => Error::SolverFailure(format!("NMPC: {msg}")),
            Error::IntegrationDiverged { .. } => Error::SolverFailure("NMPC: prediction diverged".into()),
            other => other,
        })?;
    Ok(NmpcSolution {
        inputs: sol.inputs.iter().map(to_vector4).collect(),
        states: sol.states,
        kkt_residual: sol.kkt_residual,
        residual_history: sol.residual_history,
        iterations: sol.iterations,
        qp_iterations: sol.qp_iterations,
        active_bounds: sol.active_bounds,
        solve_time: started.elapsed(),
    })
}
