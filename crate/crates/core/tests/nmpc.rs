mod common;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3, Vector4};
use proptest::prelude::*;
use ringrotor::dynamics::State;
use ringrotor::geometry::{total_inertia, LayoutParams, Payload, VehicleProperties};
use ringrotor::nmpc::ocp::{objective, rollout, solve_ocp, OcpSettings, OcpWeights};
use ringrotor::nmpc::qp::{projected_gradient_norm, solve_box_qp};
use ringrotor::nmpc::{cost, quaternion_error, solve, tracking_error, NmpcConfig, QuadrotorModel, ReferenceWindow};
use ringrotor::{GRAVITY, L_MAX, L_MIN, VEHICLE_MASS};

fn props(size: f64) -> VehicleProperties {
    let geom = LayoutParams::calibrated().geometry().unwrap();
    total_inertia(&geom, size, &Payload::none()).unwrap()
}

fn hover_window(at: Vector3<f64>, p: &VehicleProperties, n: usize) -> ReferenceWindow {
    ReferenceWindow::constant(State::at_rest(at), p, n)
}

#[test]
fn hover_is_a_fixed_point_of_the_controller() {
    let p = props(L_MAX);
    let cfg = NmpcConfig::default();
    let x = State::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let sol = solve(&x, &hover_window(x.position, &p, cfg.horizon), &p, &cfg, None).unwrap();
    let u = sol.command().thrusts;
    let wrench = p.allocation * u;
    assert!((wrench[0] - VEHICLE_MASS * GRAVITY).abs() < 1e-6);
    assert!(wrench.fixed_rows::<3>(1).amax() < 1e-6);
}

#[test]
fn unconstrained_linear_problem_equals_finite_horizon_lqr() {
    let model = common::LinearModel::double_integrator(0.1);
    let n = 15;
    let q = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 5.0, 1.0, 0.5]));
    let r = DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 0.7]));
    let q_n = &q * 3.0;
    let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.3]);
    let weights = OcpWeights { stage: q.clone(), terminal: q_n.clone(), input: r.clone() };
    let settings = OcpSettings {
        horizon: n,
        input_lower: DVector::from_element(2, -1e6),
        input_upper: DVector::from_element(2, 1e6),
        max_iterations: 5,
        tolerance: 1e-10,
    };
    let refs = vec![DVector::zeros(4); n + 1];
    let input_refs = vec![DVector::zeros(2); n];
    let sol = solve_ocp(&model, &x0, &refs, &input_refs, &weights, &settings, None).unwrap();
    let lqr = common::finite_horizon_lqr(&model.a, &model.b, &q, &r, &q_n, n, &x0);
    for (u, v) in sol.inputs.iter().zip(&lqr) {
        assert!((u - v).amax() < 1e-6, "{u} vs {v}");
    }
    assert_eq!(sol.active_bounds, 0);
}

#[test]
fn linear_problem_cost_is_minimal_against_perturbations() {
    let model = common::LinearModel::double_integrator(0.1);
    let n = 8;
    let weights = OcpWeights {
        stage: DMatrix::identity(4, 4),
        terminal: DMatrix::identity(4, 4) * 2.0,
        input: DMatrix::identity(2, 2) * 0.1,
    };
    let settings = OcpSettings {
        horizon: n,
        input_lower: DVector::from_element(2, -0.5),
        input_upper: DVector::from_element(2, 0.5),
        max_iterations: 5,
        tolerance: 1e-10,
    };
    let x0 = DVector::from_vec(vec![2.0, -1.0, 0.0, 0.0]);
    let refs = vec![DVector::zeros(4); n + 1];
    let input_refs = vec![DVector::zeros(2); n];
    let sol = solve_ocp(&model, &x0, &refs, &input_refs, &weights, &settings, None).unwrap();
    assert!(sol.active_bounds > 0);
    let best = objective(&model, &sol.states, &sol.inputs, &refs, &input_refs, &weights).unwrap();
    // grid of feasible perturbations never does better
    for k in 0..n {
        for j in 0..2 {
            for d in [-0.05, -0.01, 0.01, 0.05] {
                let mut inputs = sol.inputs.clone();
                inputs[k][j] = (inputs[k][j] + d).clamp(-0.5, 0.5);
                let states = rollout(&model, &x0, &inputs).unwrap();
                let c = objective(&model, &states, &inputs, &refs, &input_refs, &weights).unwrap();
                assert!(c >= best - 1e-12, "perturbation ({k},{j},{d}) improved {best} to {c}");
            }
        }
    }
}

#[test]
fn saturating_reference_hits_the_bounds_exactly() {
    let p = props(L_MAX);
    let cfg = NmpcConfig { max_iterations: 5, ..NmpcConfig::default() };
    let x = State::at_rest(Vector3::new(0.0, 0.0, 0.0));
    let sol = solve(&x, &hover_window(Vector3::new(0.0, 0.0, 5.0), &p, cfg.horizon), &p, &cfg, None).unwrap();
    let all: Vec<f64> = sol.inputs.iter().flat_map(|u| u.iter().copied()).collect();
    assert!(all.iter().all(|&t| (cfg.thrust_min..=cfg.thrust_max).contains(&t)));
    assert!(all.contains(&cfg.thrust_max));
    assert!(sol.active_bounds > 0);
}

#[test]
fn warm_started_resolve_needs_at_most_one_iteration() {
    let p = props(L_MIN);
    let cfg = NmpcConfig { max_iterations: 30, kkt_tolerance: 1e-8, ..NmpcConfig::default() };
    let x = State {
        position: Vector3::new(0.3, -0.2, 0.8),
        velocity: Vector3::new(0.2, 0.1, 0.0),
        attitude: UnitQuaternion::from_euler_angles(0.1, -0.05, 0.2),
        angular_velocity: Vector3::new(0.1, 0.0, -0.2),
    };
    let window = hover_window(Vector3::new(0.0, 0.0, 1.0), &p, cfg.horizon);
    let first = solve(&x, &window, &p, &cfg, None).unwrap();
    assert!(first.kkt_residual <= cfg.kkt_tolerance, "cold solve stopped at {}", first.kkt_residual);
    let again = solve(&x, &window, &p, &cfg, Some(&first)).unwrap();
    assert!(again.iterations <= 1, "{} iterations", again.iterations);
    // the residual history decreases over the cold solve's last iterations
    let h = &first.residual_history;
    assert!(h.last().unwrap() < &h[0]);
}

#[test]
fn reported_cost_matches_an_independent_sum() {
    let p = props(0.35);
    let cfg = NmpcConfig::default();
    let x = State::at_rest(Vector3::new(0.1, 0.0, 0.9));
    let window = hover_window(Vector3::new(0.0, 0.0, 1.0), &p, cfg.horizon);
    let sol = solve(&x, &window, &p, &cfg, None).unwrap();
    let mut manual = 0.0;
    for (k, s) in sol.states.iter().enumerate() {
        let e = tracking_error(s, &window.states[k]).unwrap();
        let q = [cfg.q_position, cfg.q_velocity, cfg.q_attitude, cfg.q_rate].concat();
        let scale = if k == cfg.horizon { cfg.terminal_scale } else { 1.0 };
        manual += scale * (0..12).map(|i| q[i] * e[i] * e[i]).sum::<f64>();
        if k < cfg.horizon {
            let du = sol.inputs[k] - window.inputs[k];
            manual += (0..4).map(|i| cfg.r_thrust[i] * du[i] * du[i]).sum::<f64>();
        }
    }
    let reported = cost(&sol.states, &sol.inputs, &window, &cfg).unwrap();
    assert!((reported - manual).abs() <= 1e-12 * manual.max(1.0));
}

#[test]
fn scaling_all_weights_leaves_the_plan_unchanged() {
    let p = props(L_MAX);
    let x = State::at_rest(Vector3::new(0.2, -0.1, 0.9));
    let base = NmpcConfig { max_iterations: 20, kkt_tolerance: 1e-10, ..NmpcConfig::default() };
    let s = 7.0;
    let scaled = NmpcConfig {
        q_position: base.q_position.map(|v| v * s),
        q_velocity: base.q_velocity.map(|v| v * s),
        q_attitude: base.q_attitude.map(|v| v * s),
        q_rate: base.q_rate.map(|v| v * s),
        r_thrust: base.r_thrust.map(|v| v * s),
        kkt_tolerance: base.kkt_tolerance * s,
        ..base.clone()
    };
    let window = hover_window(Vector3::new(0.0, 0.0, 1.0), &p, base.horizon);
    let a = solve(&x, &window, &p, &base, None).unwrap();
    let b = solve(&x, &window, &p, &scaled, None).unwrap();
    for (u, v) in a.inputs.iter().zip(&b.inputs) {
        assert!((u - v).amax() < 1e-6);
    }
}

#[test]
fn converged_plan_is_consistent_with_the_model() {
    let p = props(L_MAX);
    let cfg = NmpcConfig { max_iterations: 30, kkt_tolerance: 1e-9, ..NmpcConfig::default() };
    let x = State::at_rest(Vector3::new(0.0, 0.0, 1.0));
    let window = hover_window(Vector3::new(0.5, 0.0, 1.0), &p, cfg.horizon);
    let sol = solve(&x, &window, &p, &cfg, None).unwrap();
    assert_eq!(sol.states.len(), cfg.horizon + 1);
    assert_eq!(sol.states[0], x);
    let model = QuadrotorModel::new(&p, &cfg);
    let inputs: Vec<DVector<f64>> = sol.inputs.iter().map(|u| DVector::from_column_slice(u.as_slice())).collect();
    let sim = rollout(&model, &x, &inputs).unwrap();
    let gap = sim.iter().zip(&sol.states).map(|(a, b)| (a.position - b.position).norm()).fold(0.0, f64::max);
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn quaternion_error_is_sign_invariant_and_zero_on_reference() {
    let q = UnitQuaternion::from_euler_angles(0.3, -0.4, 1.2);
    assert_eq!(quaternion_error(&q, &q).unwrap(), Vector3::zeros());
    let minus = UnitQuaternion::new_unchecked(-q.into_inner());
    let r = UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3);
    assert!((quaternion_error(&q, &r).unwrap() - quaternion_error(&minus, &r).unwrap()).norm() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn box_qp_satisfies_kkt(entries in prop::collection::vec(-1.0f64..1.0, 64), g in prop::collection::vec(-5.0f64..5.0, 8)) {
        let m = DMatrix::from_row_slice(8, 8, &entries);
        let h = &m * m.transpose() + DMatrix::identity(8, 8) * 0.05;
        let g = DVector::from_vec(g);
        let lo = DVector::from_element(8, -0.3);
        let hi = DVector::from_element(8, 0.4);
        let s = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        prop_assert!(s.z.iter().zip(lo.iter().zip(hi.iter())).all(|(z, (l, u))| l <= z && z <= u));
        prop_assert!(projected_gradient_norm(&h, &g, &lo, &hi, &s.z) < 1e-8);
        prop_assert!(s.multipliers.iter().all(|l| *l >= -1e-9));
    }

    #[test]
    fn commands_never_leave_the_thrust_box(dx in prop::array::uniform3(-3.0f64..3.0), roll in -0.6f64..0.6) {
        let p = props(L_MAX);
        let cfg = NmpcConfig::default();
        let x = State {
            attitude: UnitQuaternion::from_euler_angles(roll, 0.0, 0.0),
            ..State::at_rest(Vector3::new(0.0, 0.0, 1.0) + Vector3::from(dx))
        };
        let sol = solve(&x, &hover_window(Vector3::new(0.0, 0.0, 1.0), &p, cfg.horizon), &p, &cfg, None).unwrap();
        for u in &sol.inputs {
            prop_assert!(u.iter().all(|&t| t >= cfg.thrust_min && t <= cfg.thrust_max));
        }
    }

    #[test]
    fn hover_reference_inputs_balance_any_size(t in 0.0f64..=1.0) {
        let p = props(L_MIN + t * (L_MAX - L_MIN));
        let w = hover_window(Vector3::z(), &p, 3);
        let wrench = p.allocation * w.inputs[0];
        prop_assert!((wrench[0] - p.mass * GRAVITY).abs() < 1e-12);
        let _: Vector4<f64> = wrench;
    }
}
