//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ringrotor::geometry::{LayoutParams, MorphGeometry, Payload, Shape, FREE_PARAMETERS};
use ringrotor::math::rot_z;
use ringrotor::nmpc::ocp::{Linearization, ShootingModel};

/// Uniform point in a solid shape, in the shape's local frame (centered on
/// the mount point), by rejection.
fn sample_shape(shape: &Shape, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let mut uniform = |half: f64| rng.random_range(-half..half);
    match shape {
        Shape::Cuboid { size } => Vector3::new(uniform(0.5 * size.x), uniform(0.5 * size.y), uniform(0.5 * size.z)),
        Shape::MotorCylinder { radius, height } => loop {
            let p = Vector3::new(uniform(*radius), uniform(*radius), uniform(0.5 * height));
            if p.x * p.x + p.y * p.y <= radius * radius {
                return p;
            }
        },
        Shape::ModuleComposite(m) => loop {
            let p = Vector3::new(uniform(0.5 * m.outer.x), uniform(0.5 * m.outer.y), uniform(0.5 * m.outer.z));
            let removed = m.cutouts.iter().any(|c| (0..3).all(|k| (p[k] - c.offset[k]).abs() < 0.5 * c.size[k]));
            if !removed {
                return p;
            }
        },
    }
}

/// COG and inertia about the COG from equal-weight point samples of every
/// solid (and the payload box of size `payload_size`, if any).
pub fn monte_carlo_properties(
    geom: &MorphGeometry,
    size: f64,
    payload: Option<(f64, Vector3<f64>, Vector3<f64>)>,
    points_per_body: usize,
    rng: &mut ChaCha8Rng,
) -> (Vector3<f64>, Matrix3<f64>) {
    let mut points: Vec<(f64, Vector3<f64>)> = Vec::new();
    for c in &geom.components {
        let origin = c.mount.at(size);
        let r = rot_z(c.yaw);
        let w = c.mass / points_per_body as f64;
        for _ in 0..points_per_body {
            points.push((w, origin + r * sample_shape(&c.shape, rng)));
        }
    }
    if let Some((mass, dims, position)) = payload {
        let shape = Shape::Cuboid { size: dims };
        let w = mass / points_per_body as f64;
        for _ in 0..points_per_body {
            points.push((w, position + sample_shape(&shape, rng)));
        }
    }
    let total: f64 = points.iter().map(|p| p.0).sum();
    let cog = points.iter().fold(Vector3::zeros(), |acc, (m, p)| acc + p * *m) / total;
    let mut j = Matrix3::zeros();
    for (m, p) in &points {
        let d = p - cog;
        j += (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * *m;
    }
    (cog, j)
}

/// Random admissible layout: free parameters drawn uniformly in their
/// bounds until the mass budget leaves room for the board.
pub fn random_layout(rng: &mut ChaCha8Rng) -> LayoutParams {
    let base = LayoutParams::default();
    loop {
        let values: Vec<f64> = FREE_PARAMETERS.iter().map(|p| rng.random_range(p.lower..p.upper)).collect();
        let params = base.with_free_values(&values);
        if params.geometry().is_ok() {
            return params;
        }
    }
}

pub fn payload_box(mass: f64, dims: Vector3<f64>, position: Vector3<f64>) -> Payload {
    Payload::solid_box(mass, dims, position)
}

/// `x⁺ = A x + B u` with the identity as residual map.
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearModel {
    /// Planar double integrator, state (p_x, p_y, v_x, v_y), input (a_x, a_y).
    pub fn double_integrator(dt: f64) -> Self {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = dt;
        a[(1, 3)] = dt;
        let mut b = DMatrix::zeros(4, 2);
        b[(0, 0)] = 0.5 * dt * dt;
        b[(1, 1)] = 0.5 * dt * dt;
        b[(2, 0)] = dt;
        b[(3, 1)] = dt;
        Self { a, b }
    }
}

impl ShootingModel for LinearModel {
    type State = DVector<f64>;

    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn simulate(&self, x: &DVector<f64>, u: &DVector<f64>) -> ringrotor::Result<DVector<f64>> {
        Ok(&self.a * x + &self.b * u)
    }

    fn linearize(&self, x: &DVector<f64>, u: &DVector<f64>) -> ringrotor::Result<Linearization<DVector<f64>>> {
        Ok(Linearization { next: self.simulate(x, u)?, a: self.a.clone(), b: self.b.clone() })
    }

    fn difference(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        a - b
    }

    fn retract(&self, x: &DVector<f64>, delta: &DVector<f64>) -> DVector<f64> {
        x + delta
    }

    fn tracking_residual(&self, x: &DVector<f64>, r: &DVector<f64>) -> ringrotor::Result<(DVector<f64>, DMatrix<f64>)> {
        Ok((x - r, DMatrix::identity(x.len(), x.len())))
    }
}

/// Optimal inputs of `Σ xᵀQx + uᵀRu + x_Nᵀ Q_N x_N` by the backward
/// Riccati recursion and a forward pass.
pub fn finite_horizon_lqr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    q_n: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let mut p = q_n.clone();
    let mut gains = vec![DMatrix::zeros(b.ncols(), a.nrows()); horizon];
    for k in (0..horizon).rev() {
        let bt_p = b.transpose() * &p;
        let k_gain = (r + &bt_p * b).lu().solve(&(&bt_p * a)).unwrap();
        p = q + a.transpose() * &p * (a - b * &k_gain);
        gains[k] = k_gain;
    }
    let mut x = x0.clone();
    gains
        .iter()
        .map(|k| {
            let u = -(k * &x);
            x = a * &x + b * &u;
            u
        })
        .collect()
}
