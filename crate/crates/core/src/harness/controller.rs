//! Closed-loop wrappers that turn the three control laws into per-tick
//! controllers with a common interface.

use std::time::Instant;

use nalgebra::Vector4;

use super::config::{ControllerKind, Scenario};
use super::reference::{ReferenceSample, Trajectory};
use crate::baselines::{lqr_control, pid_control, LqrConfig, PidGains};
use crate::dynamics::{ControlInput, State};
use crate::error::Result;
use crate::geometry::VehicleProperties;
use crate::nmpc::{self, NmpcConfig, NmpcSolution, ReferenceWindow};
use crate::GRAVITY;

/// Per-tick solver diagnostics. Solve times are wall-clock and therefore
/// never part of the deterministic trajectory log.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TickDiagnostics {
    pub iterations: usize,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
    pub active_bounds: usize,
    pub solve_time: f64,
}

pub struct NmpcController {
    pub cfg: NmpcConfig,
    previous: Option<(f64, NmpcSolution)>,
}

impl NmpcController {
    pub fn new(cfg: NmpcConfig) -> Self {
        Self { cfg, previous: None }
    }

    /// Reference states on the shooting grid starting at `t`; reference
    /// inputs are the hover thrusts of the current properties unless
    /// `feedforward_inputs` asks for the thrusts of the reference wrench.
    pub fn window(&self, t: f64, trajectory: &Trajectory, props: &VehicleProperties) -> ReferenceWindow {
        let n = self.cfg.horizon;
        let samples: Vec<ReferenceSample> = (0..=n).map(|k| trajectory.sample(t + k as f64 * self.cfg.dt)).collect();
        let states = samples.iter().map(ReferenceSample::state).collect();
        if self.cfg.feedforward_inputs {
            let inputs = samples[..n]
                .iter()
                .map(|s| {
                    let w = s.angular_velocity;
                    let tau = w.cross(&(props.inertia * w));
                    props.thrusts_for(&Vector4::new(s.collective_thrust(props.mass), tau.x, tau.y, tau.z))
                })
                .collect();
            ReferenceWindow { states, inputs }
        } else {
            ReferenceWindow { states, inputs: vec![props.hover_thrusts(GRAVITY); n] }
        }
    }

    pub fn compute(
        &mut self,
        t: f64,
        x: &State,
        trajectory: &Trajectory,
        props: &VehicleProperties,
    ) -> Result<(ControlInput, TickDiagnostics)> {
        let window = self.window(t, trajectory, props);
        let warm = match &self.previous {
            Some((t_prev, sol)) => Some(sol.shifted(t - t_prev, x, props, &self.cfg)?),
            None => None,
        };
        let sol = nmpc::solve(x, &window, props, &self.cfg, warm.as_ref())?;
        let diag = TickDiagnostics {
            iterations: sol.iterations,
            qp_iterations: sol.qp_iterations,
            kkt_residual: sol.kkt_residual,
            active_bounds: sol.active_bounds,
            solve_time: sol.solve_time.as_secs_f64(),
        };
        let u = sol.command();
        self.previous = Some((t, sol));
        Ok((u, diag))
    }
}

pub enum Controller {
    Pid(PidGains),
    Lqr(LqrConfig),
    Nmpc(Box<NmpcController>),
}

impl Controller {
    pub fn from_scenario(sc: &Scenario, kind: ControllerKind) -> Self {
        match kind {
            ControllerKind::Pid => Controller::Pid(sc.pid),
            ControllerKind::Lqr => Controller::Lqr(sc.lqr),
            ControllerKind::Nmpc => Controller::Nmpc(Box::new(NmpcController::new(sc.nmpc.clone()))),
        }
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            Controller::Pid(_) => ControllerKind::Pid,
            Controller::Lqr(_) => ControllerKind::Lqr,
            Controller::Nmpc(_) => ControllerKind::Nmpc,
        }
    }

    /// Thrust bounds the controller respects.
    pub fn thrust_box(&self) -> (f64, f64) {
        match self {
            Controller::Pid(g) => (g.thrust_min, g.thrust_max),
            Controller::Lqr(c) => (c.thrust_min, c.thrust_max),
            Controller::Nmpc(n) => (n.cfg.thrust_min, n.cfg.thrust_max),
        }
    }

    pub fn compute(
        &mut self,
        t: f64,
        x: &State,
        trajectory: &Trajectory,
        props: &VehicleProperties,
    ) -> Result<(ControlInput, TickDiagnostics)> {
        match self {
            Controller::Pid(gains) => {
                let started = Instant::now();
                let u = pid_control(x, &trajectory.sample(t), props, gains)?;
                Ok((u, TickDiagnostics { solve_time: started.elapsed().as_secs_f64(), ..Default::default() }))
            }
            Controller::Lqr(cfg) => {
                let started = Instant::now();
                let u = lqr_control(x, &trajectory.sample(t), props, cfg)?;
                Ok((u, TickDiagnostics { solve_time: started.elapsed().as_secs_f64(), ..Default::default() }))
            }
            Controller::Nmpc(n) => n.compute(t, x, trajectory, props),
        }
    }
}
