//! Fits the free layout parameters to measured mass properties at both ends
//! of the morphing stroke.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::layout::{LayoutParams, FREE_PARAMETERS};
use super::{total_inertia, MorphGeometry, Payload};
use crate::error::{Error, Result};
use crate::math::satisfies_triangle_inequality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationTargets {
    /// Diagonal of J at `l_max`, kg·m².
    pub inertia_l_max: [f64; 3],
    /// Diagonal of J at `l_min`, kg·m².
    pub inertia_l_min: [f64; 3],
    /// COG at `l_max`, m.
    pub cog_l_max: [f64; 3],
    pub mass: f64,
    /// Relative tolerance on each inertia entry.
    pub inertia_tolerance: f64,
    /// Absolute tolerance on each COG coordinate, m.
    pub cog_tolerance: f64,
    /// Absolute tolerance on the fractional J_xx reduction over the stroke.
    pub reduction_tolerance: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self {
            inertia_l_max: [0.0380, 0.0459, 0.0823],
            inertia_l_min: [0.0144, 0.0188, 0.0317],
            cog_l_max: [-0.027, -0.009, 0.000],
            mass: crate::VEHICLE_MASS,
            inertia_tolerance: 0.05,
            cog_tolerance: 0.001,
            reduction_tolerance: 0.02,
        }
    }
}

impl CalibrationTargets {
    /// Fractional J_xx reduction from `l_max` to `l_min` implied by the targets.
    pub fn xx_reduction(&self) -> f64 {
        1.0 - self.inertia_l_min[0] / self.inertia_l_max[0]
    }

    /// Targets reproduced exactly by a given layout.
    pub fn from_layout(params: &LayoutParams) -> Result<Self> {
        let g = params.geometry()?;
        let big = total_inertia(&g, g.l_max, &Payload::none())?;
        let small = total_inertia(&g, g.l_min, &Payload::none())?;
        let diag = |m: &nalgebra::Matrix3<f64>| [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        Ok(Self {
            inertia_l_max: diag(&big.inertia),
            inertia_l_min: diag(&small.inertia),
            cog_l_max: big.cog.into(),
            mass: params.total_mass,
            ..Self::default()
        })
    }

    fn check_feasible(&self) -> Result<()> {
        for (label, j) in [("l_max", self.inertia_l_max), ("l_min", self.inertia_l_min)] {
            let v = Vector3::from(j);
            if !(v.min() > 0.0) || !satisfies_triangle_inequality(&v, 0.0) {
                return Err(Error::CalibrationFailed(format!(
                    "inertia target at {label} {j:?} violates the triangle inequality"
                )));
            }
        }
        if !(self.mass > 0.0) {
            return Err(Error::CalibrationFailed("mass target must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetResidual {
    pub name: String,
    pub target: f64,
    pub achieved: f64,
    /// Relative error for inertia entries, absolute error (m) for COG.
    pub error: f64,
    pub tolerance: f64,
}

impl TargetResidual {
    pub fn passed(&self) -> bool {
        self.error.abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub residuals: Vec<TargetResidual>,
    pub mass_error: f64,
    pub iterations: usize,
    /// Norm of the scaled least-squares residual vector.
    pub cost: f64,
}

impl CalibrationReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(TargetResidual::passed) && self.mass_error.abs() < 1e-9
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ =
            writeln!(s, "{:<12} {:>12} {:>12} {:>11} {:>9}  status", "target", "wanted", "achieved", "error", "tol");
        for r in &self.residuals {
            let _ = writeln!(
                s,
                "{:<12} {:>12.6} {:>12.6} {:>11.3e} {:>9.3e}  {}",
                r.name,
                r.target,
                r.achieved,
                r.error,
                r.tolerance,
                if r.passed() { "ok" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            s,
            "mass error {:.3e} kg, {} iterations, cost {:.3e}",
            self.mass_error, self.iterations, self.cost
        );
        s
    }

    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        for r in &self.residuals {
            let _ = writeln!(s, "{}.target = {}", r.name, r.target);
            let _ = writeln!(s, "{}.achieved = {}", r.name, r.achieved);
            let _ = writeln!(s, "{}.error = {}", r.name, r.error);
        }
        let _ = writeln!(s, "mass_error = {}", self.mass_error);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "cost = {}", self.cost);
        let _ = writeln!(s, "passed = {}", self.passed());
        s
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub params: LayoutParams,
    pub geometry: MorphGeometry,
    pub report: CalibrationReport,
}

const COG_SCALE: f64 = 0.01;
const REDUCTION_SCALE: f64 = 0.03;

fn residual_vector(params: &LayoutParams, targets: &CalibrationTargets) -> Result<DVector<f64>> {
    let g = params.geometry()?;
    let big = total_inertia(&g, g.l_max, &Payload::none())?;
    let small = total_inertia(&g, g.l_min, &Payload::none())?;
    let mut r = DVector::zeros(10);
    for k in 0..3 {
        r[k] = big.inertia[(k, k)] / targets.inertia_l_max[k] - 1.0;
        r[3 + k] = small.inertia[(k, k)] / targets.inertia_l_min[k] - 1.0;
        r[6 + k] = (big.cog[k] - targets.cog_l_max[k]) / COG_SCALE;
    }
    let reduction = 1.0 - small.inertia[(0, 0)] / big.inertia[(0, 0)];
    r[9] = (reduction - targets.xx_reduction()) / REDUCTION_SCALE;
    Ok(r)
}

fn build_report(params: &LayoutParams, targets: &CalibrationTargets, iterations: usize) -> Result<CalibrationReport> {
    let g = params.geometry()?;
    let big = total_inertia(&g, g.l_max, &Payload::none())?;
    let small = total_inertia(&g, g.l_min, &Payload::none())?;
    let axes = ["xx", "yy", "zz"];
    let mut residuals = Vec::new();
    for (label, props, want) in [("J_max", &big, targets.inertia_l_max), ("J_min", &small, targets.inertia_l_min)] {
        for k in 0..3 {
            let achieved = props.inertia[(k, k)];
            residuals.push(TargetResidual {
                name: format!("{label}.{}", axes[k]),
                target: want[k],
                achieved,
                error: achieved / want[k] - 1.0,
                tolerance: targets.inertia_tolerance,
            });
        }
    }
    for (k, axis) in ["x", "y", "z"].iter().enumerate() {
        residuals.push(TargetResidual {
            name: format!("cog.{axis}"),
            target: targets.cog_l_max[k],
            achieved: big.cog[k],
            error: big.cog[k] - targets.cog_l_max[k],
            tolerance: targets.cog_tolerance,
        });
    }
    let reduction = 1.0 - small.inertia[(0, 0)] / big.inertia[(0, 0)];
    residuals.push(TargetResidual {
        name: "J_xx.reduction".into(),
        target: targets.xx_reduction(),
        achieved: reduction,
        error: reduction - targets.xx_reduction(),
        tolerance: targets.reduction_tolerance,
    });
    let cost = residual_vector(params, targets)?.norm();
    Ok(CalibrationReport { residuals, mass_error: g.dry_mass() - targets.mass, iterations, cost })
}

/// Clamps to the parameter bounds, then scales the fitted masses down
/// uniformly if they would leave the board less than its minimum mass.
fn project(v: &mut DVector<f64>, base: &LayoutParams) {
    for (x, p) in v.iter_mut().zip(FREE_PARAMETERS.iter()) {
        *x = x.clamp(p.lower, p.upper);
    }
    let index = |name: &str| FREE_PARAMETERS.iter().position(|p| p.name == name).unwrap();
    let (module, battery, servo) = (index("module_mass"), index("battery_mass"), index("servo_mass"));
    let budget = base.total_mass - 4.0 * base.motor_mass - base.board_min_mass - 1e-12;
    let used = 4.0 * v[module] + v[battery] + v[servo];
    if used > budget && budget > 0.0 {
        let scale = budget / used;
        for k in [module, battery, servo] {
            v[k] *= scale;
        }
    }
}

/// Levenberg–Marquardt fit of [`FREE_PARAMETERS`] starting from `initial`,
/// projected onto the parameter bounds after every step. The total mass is
/// matched exactly by construction (the board takes the remainder).
pub fn calibrate_layout(targets: &CalibrationTargets, initial: &LayoutParams) -> Result<Calibration> {
    targets.check_feasible()?;
    let base = LayoutParams { total_mass: targets.mass, ..initial.clone() };
    let eval = |v: &DVector<f64>| residual_vector(&base.with_free_values(v.as_slice()), targets);

    let n = FREE_PARAMETERS.len();
    let mut x = DVector::from_vec(base.free_values());
    project(&mut x, &base);
    let mut r = eval(&x)?;
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    const MAX_ITERATIONS: usize = 500;
    const TARGET_COST: f64 = 1e-26;

    while iterations < MAX_ITERATIONS && cost > TARGET_COST {
        iterations += 1;
        // central-difference Jacobian; fall back to one-sided steps at bounds
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let p = &FREE_PARAMETERS[k];
            let h = 1e-6 * (p.upper - p.lower);
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] = (x[k] + h).min(p.upper);
            lo[k] = (x[k] - h).max(p.lower);
            let (r_hi, r_lo) = match (eval(&hi), eval(&lo)) {
                (Ok(a), Ok(b)) => (a, b),
                (Ok(a), Err(_)) => {
                    lo[k] = x[k];
                    (a, r.clone())
                }
                (Err(_), Ok(b)) => {
                    hi[k] = x[k];
                    (r.clone(), b)
                }
                (Err(_), Err(_)) => continue,
            };
            let span = hi[k] - lo[k];
            if span > 0.0 {
                jac.set_column(k, &((r_hi - r_lo) / span));
            }
        }
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() < 1e-16 {
            break;
        }
        // parameters pinned on a bound with the descent direction pointing
        // outward are frozen for this step
        let frozen: Vec<bool> = (0..n)
            .map(|k| {
                let p = &FREE_PARAMETERS[k];
                (x[k] <= p.lower && grad[k] > 0.0) || (x[k] >= p.upper && grad[k] < 0.0)
            })
            .collect();
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj.clone();
            for k in 0..n {
                damped[(k, k)] += lambda * (jtj[(k, k)] + 1e-12);
            }
            let mut grad = grad.clone();
            for k in (0..n).filter(|&k| frozen[k]) {
                damped.row_mut(k).fill(0.0);
                damped.column_mut(k).fill(0.0);
                damped[(k, k)] = 1.0;
                grad[k] = 0.0;
            }
            let step = match damped.cholesky() {
                Some(c) => c.solve(&(-&grad)),
                None => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let mut trial = &x + step;
            project(&mut trial, &base);
            if let Ok(r_trial) = eval(&trial) {
                let c = r_trial.norm_squared();
                if c < cost {
                    x = trial;
                    r = r_trial;
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }

    let params = base.with_free_values(x.as_slice());
    let geometry = params.geometry()?;
    let report = build_report(&params, targets, iterations)?;
    if !report.passed() {
        return Err(Error::CalibrationFailed(report.to_table()));
    }
    Ok(Calibration { params, geometry, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_violating_targets_fail_before_fitting() {
        let t = CalibrationTargets { inertia_l_max: [0.01, 0.01, 0.05], ..CalibrationTargets::default() };
        assert!(matches!(calibrate_layout(&t, &LayoutParams::default()), Err(Error::CalibrationFailed(_))));
    }

    #[test]
    fn unreachable_targets_report_failure() {
        // far heavier than any admissible layout can produce
        let t = CalibrationTargets {
            inertia_l_max: [1.0, 1.0, 1.9],
            inertia_l_min: [0.9, 0.9, 1.7],
            ..CalibrationTargets::default()
        };
        match calibrate_layout(&t, &LayoutParams::default()) {
            Err(Error::CalibrationFailed(msg)) => assert!(msg.contains("FAIL")),
            other => panic!("expected calibration failure, got {other:?}"),
        }
    }
}
