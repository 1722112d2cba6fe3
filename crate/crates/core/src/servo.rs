//! Morphing actuator: a proportional law on the side length driving a
//! rate-limited first-order plant.
//!
//! The time constant and rate limit defaults are placeholders; no measured
//! values are available for the real mechanism.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoParams {
    /// Time constant σ, s (placeholder default).
    pub time_constant: f64,
    /// Bound on |L̇|, m/s (placeholder default).
    pub rate_limit: f64,
    pub l_min: f64,
    pub l_max: f64,
}

impl Default for ServoParams {
    fn default() -> Self {
        Self { time_constant: 0.5, rate_limit: 0.3, l_min: crate::L_MIN, l_max: crate::L_MAX }
    }
}

impl ServoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_constant > 0.0) || !(self.rate_limit > 0.0) {
            return Err(Error::InvalidConfig("servo time constant and rate limit must be > 0".into()));
        }
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return Err(Error::InvalidConfig("servo needs 0 < l_min < l_max".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, size: f64) -> f64 {
        size.clamp(self.l_min, self.l_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoCommand {
    /// Commanded rate Ω, m/s.
    pub rate: f64,
    /// The reference was outside the stroke and has been clamped.
    pub reference_clamped: bool,
}

/// `Ω = (L_ref − L) / σ`, saturated to ±rate limit. An out-of-stroke
/// reference is clamped to the stroke and flagged.
pub fn servo_command(l_ref: f64, l: f64, params: &ServoParams) -> ServoCommand {
    let target = params.clamp(l_ref);
    let rate = ((target - l) / params.time_constant).clamp(-params.rate_limit, params.rate_limit);
    ServoCommand { rate, reference_clamped: target != l_ref }
}

/// Advances the plant by `dt`; the result never leaves the stroke.
pub fn servo_step(l: f64, rate: f64, dt: f64, params: &ServoParams) -> f64 {
    params.clamp(l + rate * dt)
}

/// Servo state owned by a simulation loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Servo {
    pub params: ServoParams,
    pub size: f64,
}

impl Servo {
    pub fn new(params: ServoParams, size: f64) -> Result<Self> {
        params.validate()?;
        Ok(Self { size: params.clamp(size), params })
    }

    /// Integrates one step toward `l_ref` and returns the command used.
    /// Within 1e-12 m of the (clamped) reference the size snaps onto it, so
    /// a settled servo sits exactly at its target instead of creeping
    /// toward it forever in floating point.
    pub fn advance(&mut self, l_ref: f64, dt: f64) -> ServoCommand {
        let cmd = servo_command(l_ref, self.size, &self.params);
        self.size = servo_step(self.size, cmd.rate, dt, &self.params);
        let target = self.params.clamp(l_ref);
        if (self.size - target).abs() < 1e-12 {
            self.size = target;
        }
        cmd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn command_is_proportional_until_saturation() {
        let p = ServoParams { rate_limit: 1.0, ..ServoParams::default() };
        assert_eq!(servo_command(0.3, 0.3, &p).rate, 0.0);
        assert!((servo_command(0.414, 0.284, &p).rate - 0.26).abs() < 1e-12);
        let limited = servo_command(0.414, 0.284, &ServoParams::default());
        assert_eq!(limited.rate, 0.26f64.min(0.3));
    }

    #[test]
    fn out_of_stroke_reference_is_flagged() {
        let c = servo_command(0.2, 0.3, &ServoParams::default());
        assert!(c.reference_clamped);
        assert!((c.rate - (0.284 - 0.3) / 0.5).abs() < 1e-15);
    }

    #[test]
    fn step_clamps_to_stroke() {
        let p = ServoParams::default();
        assert_eq!(servo_step(0.3, 0.0, 0.01, &p), 0.3);
        assert_eq!(servo_step(0.29, -1.0, 0.1, &p), 0.284);
        assert_eq!(servo_step(0.41, 1.0, 0.1, &p), 0.414);
    }

    #[test]
    fn exponential_approach_with_time_constant() {
        let p = ServoParams { rate_limit: 10.0, ..ServoParams::default() };
        let mut s = Servo::new(p, 0.414).unwrap();
        let dt = 1e-4;
        let steps = (p.time_constant / dt).round() as usize;
        for _ in 0..steps {
            s.advance(0.284, dt);
        }
        let expected = (-1.0f64).exp() * (0.414 - 0.284);
        assert!(((s.size - 0.284) - expected).abs() / expected < 0.02);
    }

    #[test]
    fn full_stroke_round_trip_has_no_drift() {
        let mut s = Servo::new(ServoParams::default(), 0.414).unwrap();
        for _ in 0..2000 {
            s.advance(0.0, 0.01);
        }
        assert_eq!(s.size, 0.284);
        for _ in 0..2000 {
            s.advance(1.0, 0.01);
        }
        assert_eq!(s.size, 0.414);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = ServoParams { time_constant: 0.0, ..ServoParams::default() };
        assert!(Servo::new(p, 0.3).is_err());
    }

    proptest! {
        #[test]
        fn size_stays_in_stroke_and_never_overshoots(
            refs in proptest::collection::vec(0.2f64..0.5, 1..40),
            start in 0.284f64..0.414,
        ) {
            let mut s = Servo::new(ServoParams::default(), start).unwrap();
            for r in refs {
                let target = s.params.clamp(r);
                for _ in 0..10 {
                    let before = s.size;
                    s.advance(r, 0.01);
                    prop_assert!(s.size >= 0.284 && s.size <= 0.414);
                    // monotone approach: never crosses the target
                    prop_assert!((before - target) * (s.size - target) >= 0.0);
                }
            }
        }
    }
}
