//! Simulation and control of a size-morphing quadrotor.
//!
//! The airframe is a ring of four corner modules whose side length `L` is
//! driven by a single servo between [`L_MIN`] and [`L_MAX`]. Its mass
//! properties and thrust allocation are recomputed from the component
//! layout at every control tick, and a box-constrained NMPC (real-time
//! iteration Gauss-Newton SQP over a multiple-shooting transcription) flies
//! it. Cascade PID and LQR baselines, a morphing servo model and a scenario
//! harness complete the benchmark.
//!
//! - [`geometry`]: COG, composite inertia, allocation matrix, calibration.
//! - [`dynamics`]: 6-DoF rigid-body model and RK4 integrator.
//! - [`nmpc`]: the model predictive controller and its QP solver.
//! - [`baselines`]: geometric cascade PID and wrench-space LQR.
//! - [`servo`]: morphing actuator.
//! - [`harness`]: references, closed-loop scenarios, metrics and configs.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod math;
pub mod nmpc;
pub mod servo;

pub use error::{Error, Result};

/// Take-off mass of the vehicle, kg.
pub const VEHICLE_MASS: f64 = 1.665;
/// Smallest side length (fully retracted), m.
pub const L_MIN: f64 = 0.284;
/// Largest side length (springs relaxed), m.
pub const L_MAX: f64 = 0.414;
/// Rotor thrust coefficient, N·s².
pub const THRUST_COEFFICIENT: f64 = 7.19544e-9;
/// Rotor drag-torque coefficient, N·m·s².
pub const TORQUE_COEFFICIENT: f64 = 1.07932e-10;
/// Gravitational acceleration, m/s².
pub const GRAVITY: f64 = 9.81;
/// Per-rotor thrust ceiling, N.
pub const THRUST_MAX: f64 = 6.5;
/// Per-rotor thrust floor that keeps every rotor spinning, N.
pub const THRUST_MIN: f64 = 0.05;
