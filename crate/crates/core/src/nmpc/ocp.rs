//! Generic multiple-shooting optimal control problem with a Gauss-Newton
//! least-squares cost and input bounds, solved by SQP. Each iteration
//! linearizes the shooting nodes, condenses the states out and solves the
//! resulting dense box QP.
//!
//! The states live on a manifold described by the model (`retract` and
//! `difference`), so the quaternion part never leaves the unit sphere.

use nalgebra::{DMatrix, DVector};

use super::qp::{projected_gradient_norm, solve_box_qp, BoundState};
use crate::error::{Error, Result};

/// Discrete-time dynamics `x⁺ = F(x, u)` plus the local coordinates the
/// solver works in.
pub trait ShootingModel {
    type State: Clone;

    /// Dimension of the local (error) coordinates.
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn simulate(&self, x: &Self::State, u: &DVector<f64>) -> Result<Self::State>;
    /// `F(x, u)` with `∂F/∂x` and `∂F/∂u` in local coordinates
    /// (tangent at `x` in, tangent at `F(x, u)` out).
    fn linearize(&self, x: &Self::State, u: &DVector<f64>) -> Result<Linearization<Self::State>>;
    /// `a ⊖ b`, expressed in the tangent at `b`.
    fn difference(&self, a: &Self::State, b: &Self::State) -> DVector<f64>;
    /// `x ⊕ δ`.
    fn retract(&self, x: &Self::State, delta: &DVector<f64>) -> Self::State;
    /// Tracking residual `r(x)` against `reference` and its Jacobian
    /// with respect to the local coordinates at `x`. The stage cost is
    /// `rᵀ W r` with the stage weight `W`.
    fn tracking_residual(&self, x: &Self::State, reference: &Self::State) -> Result<(DVector<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone)]
pub struct Linearization<S> {
    pub next: S,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct OcpWeights {
    pub stage: DMatrix<f64>,
    pub terminal: DMatrix<f64>,
    pub input: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct OcpSettings {
    pub horizon: usize,
    pub input_lower: DVector<f64>,
    pub input_upper: DVector<f64>,
    pub max_iterations: usize,
    /// Stop once the KKT residual (max of the dynamic defects and the
    /// projected reduced gradient) is below this.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct ShootingSolution<S> {
    /// Shooting nodes `x_0 … x_N`.
    pub states: Vec<S>,
    pub inputs: Vec<DVector<f64>>,
    /// KKT residual at the last linearization point.
    pub kkt_residual: f64,
    /// KKT residual at the start of every iteration, then at the end.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub qp_iterations: usize,
    /// Input components resting on a bound.
    pub active_bounds: usize,
}

/// Least-squares objective `Σ rₖᵀ Q rₖ + Δuₖᵀ R Δuₖ + r_Nᵀ Q_N r_N`.
pub fn objective<M: ShootingModel>(
    model: &M,
    states: &[M::State],
    inputs: &[DVector<f64>],
    state_refs: &[M::State],
    input_refs: &[DVector<f64>],
    weights: &OcpWeights,
) -> Result<f64> {
    let n = inputs.len();
    let mut total = 0.0;
    for k in 0..=n {
        let (r, _) = model.tracking_residual(&states[k], &state_refs[k])?;
        let w = if k == n { &weights.terminal } else { &weights.stage };
        total += (r.transpose() * w * &r)[0];
        if k < n {
            let du = &inputs[k] - &input_refs[k];
            total += (du.transpose() * &weights.input * &du)[0];
        }
    }
    Ok(total)
}

struct Condensed {
    hessian: DMatrix<f64>,
    gradient: DVector<f64>,
    defect_norm: f64,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    defects: Vec<DVector<f64>>,
}

fn condense<M: ShootingModel>(
    model: &M,
    states: &[M::State],
    inputs: &[DVector<f64>],
    state_refs: &[M::State],
    input_refs: &[DVector<f64>],
    weights: &OcpWeights,
) -> Result<Condensed> {
    let n = inputs.len();
    let nx = model.state_dim();
    let nu = model.input_dim();
    let nz = n * nu;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut defects = Vec::with_capacity(n);
    for k in 0..n {
        let lin = model.linearize(&states[k], &inputs[k])?;
        let c = model.difference(&lin.next, &states[k + 1]);
        if !c.iter().all(|v| v.is_finite()) || !lin.a.iter().chain(lin.b.iter()).all(|v| v.is_finite()) {
            return Err(Error::SolverFailure(format!("non-finite linearization at shooting node {k}")));
        }
        a.push(lin.a);
        b.push(lin.b);
        defects.push(c);
    }

    let mut hessian = DMatrix::zeros(nz, nz);
    let mut gradient = DVector::zeros(nz);
    for k in 0..n {
        let du = &inputs[k] - &input_refs[k];
        let block = nu * k;
        let mut h_block = hessian.view_mut((block, block), (nu, nu));
        h_block += &weights.input;
        let mut g_block = gradient.rows_mut(block, nu);
        g_block += &weights.input * du;
    }
    // δx_k = s_k + G_k δz, with δx_0 = 0 because node 0 is pinned to the
    // measured state
    let mut s = DVector::zeros(nx);
    let mut g = DMatrix::zeros(nx, nz);
    for k in 0..n {
        s = &a[k] * &s + &defects[k];
        g = &a[k] * &g;
        let mut g_block = g.view_mut((0, nu * k), (nx, nu));
        g_block += &b[k];
        let (r, e) = model.tracking_residual(&states[k + 1], &state_refs[k + 1])?;
        let w = if k + 1 == n { &weights.terminal } else { &weights.stage };
        let m = &e * &g;
        let wm = w * &m;
        hessian += m.transpose() * &wm;
        gradient += wm.transpose() * (r + &e * &s);
    }
    let defect_norm = defects.iter().map(|c| c.amax()).fold(0.0, f64::max);
    Ok(Condensed { hessian, gradient, defect_norm, a, b, defects })
}

fn stack_bounds(settings: &OcpSettings, inputs: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let nu = settings.input_lower.len();
    let n = inputs.len();
    let lower = DVector::from_fn(n * nu, |i, _| settings.input_lower[i % nu] - inputs[i / nu][i % nu]);
    let upper = DVector::from_fn(n * nu, |i, _| settings.input_upper[i % nu] - inputs[i / nu][i % nu]);
    (lower, upper)
}

fn clamp_input(u: &DVector<f64>, settings: &OcpSettings) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| u[i].clamp(settings.input_lower[i], settings.input_upper[i]))
}

/// Rolls the model forward from `x0` under `inputs`.
pub fn rollout<M: ShootingModel>(model: &M, x0: &M::State, inputs: &[DVector<f64>]) -> Result<Vec<M::State>> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    for u in inputs {
        let next = model.simulate(states.last().unwrap(), u)?;
        states.push(next);
    }
    Ok(states)
}

/// SQP on the shooting problem starting from `warm` (nodes and inputs) or,
/// without one, from a rollout of the clamped input references.
pub fn solve_ocp<M: ShootingModel>(
    model: &M,
    x0: &M::State,
    state_refs: &[M::State],
    input_refs: &[DVector<f64>],
    weights: &OcpWeights,
    settings: &OcpSettings,
    warm: Option<(&[M::State], &[DVector<f64>])>,
) -> Result<ShootingSolution<M::State>> {
    let n = settings.horizon;
    let nu = model.input_dim();
    if n == 0 || state_refs.len() != n + 1 || input_refs.len() != n {
        return Err(Error::SolverFailure(format!(
            "reference window has {} states and {} inputs for horizon {n}",
            state_refs.len(),
            input_refs.len()
        )));
    }
    if settings.input_lower.len() != nu || settings.input_upper.len() != nu {
        return Err(Error::SolverFailure("input bounds do not match the input dimension".into()));
    }

    let (mut states, mut inputs) = match warm {
        Some((xs, us)) if xs.len() == n + 1 && us.len() == n => {
            let mut xs = xs.to_vec();
            xs[0] = x0.clone();
            (xs, us.iter().map(|u| clamp_input(u, settings)).collect::<Vec<_>>())
        }
        _ => {
            let us: Vec<_> = input_refs.iter().map(|u| clamp_input(u, settings)).collect();
            (rollout(model, x0, &us)?, us)
        }
    };

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut qp_iterations = 0;
    let mut qp_warm: Option<DVector<f64>> = None;
    loop {
        let cond = condense(model, &states, &inputs, state_refs, input_refs, weights)?;
        let (lower, upper) = stack_bounds(settings, &inputs);
        let zero = DVector::zeros(n * nu);
        let stationarity = projected_gradient_norm(&cond.hessian, &cond.gradient, &lower, &upper, &zero);
        let kkt = cond.defect_norm.max(stationarity);
        if !kkt.is_finite() {
            return Err(Error::SolverFailure(format!("KKT residual became {kkt} after {iterations} iterations")));
        }
        history.push(kkt);
        if kkt <= settings.tolerance || iterations >= settings.max_iterations {
            let active_bounds = inputs
                .iter()
                .flat_map(|u| (0..nu).map(move |i| (u[i], i)))
                .filter(|&(v, i)| v <= settings.input_lower[i] || v >= settings.input_upper[i])
                .count();
            return Ok(ShootingSolution {
                states,
                inputs,
                kkt_residual: kkt,
                residual_history: history,
                iterations,
                qp_iterations,
                active_bounds,
            });
        }

        let qp = solve_box_qp(&cond.hessian, &cond.gradient, &lower, &upper, qp_warm.as_ref())?;
        qp_iterations += qp.iterations;

        // full step: new inputs, nodes moved along the linearized dynamics
        let mut dx = DVector::zeros(model.state_dim());
        let mut next_states = Vec::with_capacity(n + 1);
        next_states.push(states[0].clone());
        for k in 0..n {
            let du = qp.z.rows(nu * k, nu).into_owned();
            dx = &cond.a[k] * &dx + &cond.b[k] * &du + &cond.defects[k];
            next_states.push(model.retract(&states[k + 1], &dx));
            let mut u = &inputs[k] + &du;
            for i in 0..nu {
                match qp.bounds[nu * k + i] {
                    BoundState::Lower => u[i] = settings.input_lower[i],
                    BoundState::Upper => u[i] = settings.input_upper[i],
                    BoundState::Free => {}
                }
            }
            inputs[k] = clamp_input(&u, settings);
        }
        states = next_states;
        // the QP is re-centred at the new iterate, so its warm start is zero
        qp_warm = Some(DVector::zeros(n * nu));
        iterations += 1;
    }
}
