//! Dense strictly convex QP with simple bounds, solved by a primal
//! active-set method:
//!
//! ```text
//! minimize ½ zᵀ H z + gᵀ z   subject to   lower ≤ z ≤ upper
//! ```

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub z: DVector<f64>,
    pub bounds: Vec<BoundState>,
    pub iterations: usize,
    /// Multipliers of the active bounds (zero for free variables), all ≥ 0 at optimality.
    pub multipliers: DVector<f64>,
}

impl BoxQpSolution {
    pub fn active_count(&self) -> usize {
        self.bounds.iter().filter(|b| **b != BoundState::Free).count()
    }
}

/// Projected-gradient norm of the box QP at `z`; zero exactly at the optimum.
pub fn projected_gradient_norm(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let grad = h * z + g;
    (0..z.len())
        .map(|i| {
            if z[i] <= lower[i] {
                grad[i].min(0.0).abs()
            } else if z[i] >= upper[i] {
                grad[i].max(0.0)
            } else {
                grad[i].abs()
            }
        })
        .fold(0.0, f64::max)
}

pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    warm: Option<&DVector<f64>>,
) -> Result<BoxQpSolution> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lower.len() != n || upper.len() != n {
        return Err(Error::SolverFailure("box QP dimension mismatch".into()));
    }
    if (0..n).any(|i| !(lower[i] <= upper[i])) {
        return Err(Error::SolverFailure("box QP is infeasible: lower > upper".into()));
    }
    let mut z = match warm {
        Some(w) if w.len() == n => w.clone(),
        _ => DVector::zeros(n),
    };
    let mut bounds = vec![BoundState::Free; n];
    for i in 0..n {
        if z[i] <= lower[i] {
            z[i] = lower[i];
            bounds[i] = BoundState::Lower;
        } else if z[i] >= upper[i] {
            z[i] = upper[i];
            bounds[i] = BoundState::Upper;
        }
    }
    let scale = h.diagonal().amax().max(1.0);
    let max_iterations = 20 * n + 50;
    // after an unblocked step z minimizes over the working set; recomputing
    // the step there would only return rounding noise
    let mut at_subspace_minimum = false;
    for iteration in 0..max_iterations {
        let grad = h * &z + g;
        let free: Vec<usize> = (0..n).filter(|&i| bounds[i] == BoundState::Free).collect();
        let mut step = DVector::zeros(n);
        if !free.is_empty() && !at_subspace_minimum {
            let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| -grad[free[a]]);
            let chol =
                h_ff.cholesky().ok_or_else(|| Error::SolverFailure("QP Hessian is not positive definite".into()))?;
            let p = chol.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                step[i] = p[a];
            }
        }
        let tiny = 1e-14 * (1.0 + z.amax());
        if at_subspace_minimum || step.amax() <= tiny {
            at_subspace_minimum = false;
            // stationary on the working set: check multiplier signs
            let mut worst = None;
            let mut worst_value = -1e-12 * scale;
            let mut multipliers = DVector::zeros(n);
            for i in 0..n {
                let lambda = match bounds[i] {
                    BoundState::Free => continue,
                    BoundState::Lower => grad[i],
                    BoundState::Upper => -grad[i],
                };
                multipliers[i] = lambda;
                if lambda < worst_value {
                    worst_value = lambda;
                    worst = Some(i);
                }
            }
            match worst {
                Some(i) => bounds[i] = BoundState::Free,
                None => {
                    return Ok(BoxQpSolution { z, bounds, iterations: iteration, multipliers });
                }
            }
            continue;
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let limit = if step[i] < 0.0 {
                (lower[i] - z[i]) / step[i]
            } else if step[i] > 0.0 {
                (upper[i] - z[i]) / step[i]
            } else {
                continue;
            };
            if limit < alpha {
                alpha = limit.max(0.0);
                blocking = Some(i);
            }
        }
        for &i in &free {
            z[i] += alpha * step[i];
        }
        at_subspace_minimum = blocking.is_none();
        if let Some(i) = blocking {
            if step[i] < 0.0 {
                z[i] = lower[i];
                bounds[i] = BoundState::Lower;
            } else {
                z[i] = upper[i];
                bounds[i] = BoundState::Upper;
            }
        }
    }
    Err(Error::SolverFailure(format!("box QP did not converge in {max_iterations} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unconstrained_minimum_inside_box() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![-1.0, -1.0]);
        let lo = DVector::from_element(2, -10.0);
        let hi = DVector::from_element(2, 10.0);
        let s = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        let exact = h.clone().cholesky().unwrap().solve(&(-&g));
        assert!((&s.z - exact).amax() < 1e-12);
        assert_eq!(s.active_count(), 0);
    }

    #[test]
    fn bound_is_hit_exactly() {
        let h = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![-5.0, 0.3, 2.0]);
        let lo = DVector::from_element(3, -1.0);
        let hi = DVector::from_element(3, 1.0);
        let s = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
        assert_eq!(s.z[0], 1.0);
        assert_eq!(s.z[2], -1.0);
        assert!((s.z[1] + 0.3).abs() < 1e-14);
        assert_eq!(s.bounds, vec![BoundState::Upper, BoundState::Free, BoundState::Lower]);
    }

    #[test]
    fn inverted_bounds_are_infeasible() {
        let h = DMatrix::identity(1, 1);
        let r =
            solve_box_qp(&h, &DVector::zeros(1), &DVector::from_element(1, 1.0), &DVector::from_element(1, 0.0), None);
        assert!(matches!(r, Err(Error::SolverFailure(_))));
    }

    proptest! {
        #[test]
        fn satisfies_kkt_conditions(seed in proptest::collection::vec(-1.0f64..1.0, 36), g in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let m = DMatrix::from_row_slice(6, 6, &seed);
            let h = &m * m.transpose() + DMatrix::identity(6, 6) * 0.1;
            let g = DVector::from_vec(g);
            let lo = DVector::from_element(6, -0.5);
            let hi = DVector::from_element(6, 0.7);
            let s = solve_box_qp(&h, &g, &lo, &hi, None).unwrap();
            for i in 0..6 {
                prop_assert!(s.z[i] >= lo[i] && s.z[i] <= hi[i]);
            }
            prop_assert!(projected_gradient_norm(&h, &g, &lo, &hi, &s.z) < 1e-9);
        }
    }
}
