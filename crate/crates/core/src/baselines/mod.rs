//! Comparison controllers: a fixed-gain geometric cascade and an LQR that
//! is re-solved for the current mass properties every tick. Neither knows
//! about the thrust box; both clamp after the fact.

pub mod lqr;
pub mod pid;

pub use lqr::{dare_residual, lqr_control, lqr_gain, solve_dare, LqrConfig, RiccatiSolution};
pub use pid::{pid_control, pid_evaluate, PidGains, PidOutput};
