//! Mass properties and control allocation of the morphing airframe.
//!
//! Every component is mounted at a body-frame position that is an affine
//! function of the side length `L`. Evaluating the layout at a given `L`
//! (plus an optional grasped payload) yields the total mass, the center of
//! gravity, the inertia tensor about that center of gravity and the
//! thrust-to-wrench allocation matrix.

mod calibrate;
mod layout;

pub use calibrate::{calibrate_layout, Calibration, CalibrationReport, CalibrationTargets, TargetResidual};
pub use layout::{LayoutParams, FREE_PARAMETERS};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{parallel_axis, principal_moments, rot_z, satisfies_triangle_inequality};

/// Solid shape of a component. Cuboid dimensions are `(l, w, h)` along the
/// component's local x, y and z axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    MotorCylinder { radius: f64, height: f64 },
    Cuboid { size: Vector3<f64> },
    ModuleComposite(ModuleShape),
}

/// A structural module: a completed outer cuboid with cuboid cutouts
/// removed. Density is uniform over the remaining volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleShape {
    pub outer: Vector3<f64>,
    pub cutouts: Vec<Cutout>,
}

/// A cuboid removed from a module, centered at `offset` from the outer
/// cuboid's center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutout {
    pub size: Vector3<f64>,
    pub offset: Vector3<f64>,
}

/// Body-frame position as an affine function of side length:
/// `r(L) = base + per_length * L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    pub base: Vector3<f64>,
    pub per_length: Vector3<f64>,
}

impl Mount {
    pub fn fixed(position: Vector3<f64>) -> Self {
        Self { base: position, per_length: Vector3::zeros() }
    }

    pub fn at(&self, size: f64) -> Vector3<f64> {
        self.base + self.per_length * size
    }

    pub fn rotated(&self, yaw: f64) -> Self {
        let r = rot_z(yaw);
        Self { base: r * self.base, per_length: r * self.per_length }
    }

    /// Shrinking `L` must never move the point away from the center along
    /// any axis over `[l_min, l_max]`.
    fn is_monotone(&self, l_min: f64, l_max: f64) -> bool {
        let lo = self.at(l_min);
        let hi = self.at(l_max);
        (0..3).all(|k| {
            let tol = 1e-12;
            // no sign change across the range, and |r| non-decreasing with L
            lo[k] * hi[k] >= -tol && lo[k].abs() <= hi[k].abs() + tol
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub mass: f64,
    pub shape: Shape,
    pub mount: Mount,
    /// Rotation of the component's local frame about body z (module placement angle).
    #[serde(default)]
    pub yaw: f64,
}

impl ComponentSpec {
    fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(Error::InvalidGeometry(format!("{}: mass must be > 0", self.name)));
        }
        let positive = |v: &[f64]| v.iter().all(|x| *x > 0.0 && x.is_finite());
        let ok = match &self.shape {
            Shape::MotorCylinder { radius, height } => positive(&[*radius, *height]),
            Shape::Cuboid { size } => positive(size.as_slice()),
            Shape::ModuleComposite(m) => {
                positive(m.outer.as_slice()) && m.cutouts.iter().all(|c| positive(c.size.as_slice()))
            }
        };
        if !ok {
            return Err(Error::InvalidGeometry(format!("{}: shape dimensions must be > 0", self.name)));
        }
        Ok(())
    }

    /// COG offset from the mount point and inertia about that COG, both in
    /// body axes (local frame rotated by `yaw`).
    pub fn local_mass_properties(&self) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let (offset, j) = match &self.shape {
            Shape::ModuleComposite(m) => module_mass_properties(m, self.mass)?,
            _ => (Vector3::zeros(), primitive_inertia(self)?),
        };
        let r = rot_z(self.yaw);
        Ok((r * offset, r * j * r.transpose()))
    }
}

/// Inertia of a solid cylinder (axis along z) or cuboid about its own COG.
pub fn primitive_inertia(spec: &ComponentSpec) -> Result<Matrix3<f64>> {
    spec.validate()?;
    let m = spec.mass;
    match &spec.shape {
        Shape::MotorCylinder { radius, height } => {
            let (r2, h2) = (radius * radius, height * height);
            Ok(Matrix3::from_diagonal(&Vector3::new(3.0 * r2 + h2, 3.0 * r2 + h2, 6.0 * r2)) * (m / 12.0))
        }
        Shape::Cuboid { size } => Ok(cuboid_inertia(m, size)),
        Shape::ModuleComposite(_) => {
            Err(Error::Domain(format!("{}: module components need module_inertia", spec.name)))
        }
    }
}

fn cuboid_inertia(mass: f64, size: &Vector3<f64>) -> Matrix3<f64> {
    let (l2, w2, h2) = (size.x * size.x, size.y * size.y, size.z * size.z);
    Matrix3::from_diagonal(&Vector3::new(w2 + h2, h2 + l2, w2 + l2)) * (mass / 12.0)
}

/// Inertia of a module about its own COG, in the module's local axes.
pub fn module_inertia(spec: &ComponentSpec) -> Result<Matrix3<f64>> {
    spec.validate()?;
    match &spec.shape {
        Shape::ModuleComposite(m) => Ok(module_mass_properties(m, spec.mass)?.1),
        _ => Err(Error::Domain(format!("{}: not a module component", spec.name))),
    }
}

fn boxes_overlap(a: &Cutout, b: &Cutout) -> bool {
    (0..3).all(|k| (a.offset[k] - b.offset[k]).abs() < 0.5 * (a.size[k] + b.size[k]) - 1e-12)
}

/// Returns (COG offset from the outer cuboid center, inertia about the COG).
fn module_mass_properties(shape: &ModuleShape, mass: f64) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    for c in &shape.cutouts {
        let inside = (0..3).all(|k| c.offset[k].abs() + 0.5 * c.size[k] <= 0.5 * shape.outer[k] + 1e-12);
        if !inside {
            return Err(Error::InvalidGeometry("module cutout extends beyond the outer cuboid".into()));
        }
    }
    for (i, a) in shape.cutouts.iter().enumerate() {
        if shape.cutouts[i + 1..].iter().any(|b| boxes_overlap(a, b)) {
            return Err(Error::InvalidGeometry("module cutouts overlap".into()));
        }
    }
    let outer_volume = shape.outer.product();
    let removed: f64 = shape.cutouts.iter().map(|c| c.size.product()).sum();
    let volume = outer_volume - removed;
    if volume <= 1e-12 * outer_volume {
        return Err(Error::InvalidGeometry("module cutouts remove the whole body".into()));
    }
    let density = mass / volume;
    let completed_mass = density * outer_volume;

    // completed cuboid minus each cutout: masses and first moments
    let mut first_moment = Vector3::zeros();
    for c in &shape.cutouts {
        first_moment -= c.offset * (density * c.size.product());
    }
    let cog = first_moment / mass;

    // second moments about the module COG, completed body minus cutouts
    let mut j = cuboid_inertia(completed_mass, &shape.outer) + parallel_axis(completed_mass, &(-cog));
    for c in &shape.cutouts {
        let m_c = density * c.size.product();
        j -= cuboid_inertia(m_c, &c.size) + parallel_axis(m_c, &(c.offset - cog));
    }
    let moments = principal_moments(&j);
    if moments.min() < 0.0 {
        return Err(Error::InvalidGeometry("module has a negative principal moment".into()));
    }
    Ok((cog, j))
}

/// A grasped object: inertia is about its own COG, attached at `position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl Default for Payload {
    fn default() -> Self {
        Self::none()
    }
}

impl Payload {
    pub fn none() -> Self {
        Self { mass: 0.0, inertia: Matrix3::zeros(), position: Vector3::zeros() }
    }

    /// Solid uniform box of the given size attached at `position`.
    pub fn solid_box(mass: f64, size: Vector3<f64>, position: Vector3<f64>) -> Self {
        Self { mass, inertia: cuboid_inertia(mass, &size), position }
    }

    /// Several payloads lumped into one rigid body.
    pub fn combined(parts: &[Payload]) -> Self {
        let mass: f64 = parts.iter().map(|p| p.mass).sum();
        if !(mass > 0.0) {
            return Self::none();
        }
        let position = parts.iter().fold(Vector3::zeros(), |acc, p| acc + p.position * p.mass) / mass;
        let inertia = parts
            .iter()
            .fold(Matrix3::zeros(), |acc, p| acc + p.inertia + parallel_axis(p.mass, &(p.position - position)));
        Self { mass, inertia, position }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass >= 0.0) || !self.mass.is_finite() {
            return Err(Error::Domain("payload mass must be >= 0".into()));
        }
        if !crate::math::is_symmetric(&self.inertia, 1e-12 * self.inertia.amax().max(1.0)) {
            return Err(Error::Domain("payload inertia must be symmetric".into()));
        }
        let scale = self.inertia.amax().max(1e-300);
        if !satisfies_triangle_inequality(&principal_moments(&self.inertia), 1e-12 * scale) {
            return Err(Error::Domain("payload inertia must be PSD and satisfy the triangle inequality".into()));
        }
        Ok(())
    }
}

/// Rotor spin directions around the ring, used for the yaw row of the
/// allocation matrix.
pub const SPIN_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// Component layout of the morphing airframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphGeometry {
    pub components: Vec<ComponentSpec>,
    pub l_min: f64,
    pub l_max: f64,
    /// Rotor hub positions, ordered counter-clockwise around the ring.
    pub rotors: [Mount; 4],
    pub spin_signs: [f64; 4],
    pub thrust_coefficient: f64,
    pub torque_coefficient: f64,
}

impl MorphGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.l_min > 0.0 && self.l_min < self.l_max) {
            return Err(Error::InvalidConfig("need 0 < l_min < l_max".into()));
        }
        if !(self.thrust_coefficient > 0.0 && self.torque_coefficient > 0.0) {
            return Err(Error::InvalidConfig("rotor coefficients must be > 0".into()));
        }
        for c in &self.components {
            c.validate()?;
            if !c.mount.is_monotone(self.l_min, self.l_max) {
                return Err(Error::InvalidGeometry(format!("{}: mount is not monotone in L", c.name)));
            }
        }
        for r in &self.rotors {
            if !r.is_monotone(self.l_min, self.l_max) {
                return Err(Error::InvalidGeometry("rotor mount is not monotone in L".into()));
            }
        }
        Ok(())
    }

    pub fn check_size(&self, size: f64) -> Result<()> {
        let tol = 1e-12;
        if !size.is_finite() || size < self.l_min - tol || size > self.l_max + tol {
            return Err(Error::Domain(format!("side length {size} outside [{}, {}]", self.l_min, self.l_max)));
        }
        Ok(())
    }

    /// Sum of component masses (no payload).
    pub fn dry_mass(&self) -> f64 {
        self.components.iter().map(|c| c.mass).sum()
    }

    pub fn rotor_positions(&self, size: f64) -> [Vector3<f64>; 4] {
        std::array::from_fn(|j| self.rotors[j].at(size))
    }

    /// `(mass, COG position)` of every component at side length `size`.
    fn point_masses(&self, size: f64) -> Result<Vec<(f64, Vector3<f64>, Matrix3<f64>)>> {
        self.components
            .iter()
            .map(|c| {
                let (offset, j) = c.local_mass_properties()?;
                Ok((c.mass, c.mount.at(size) + offset, j))
            })
            .collect()
    }
}

/// Mass-weighted mean of all component COGs and the payload.
pub fn center_of_gravity(geom: &MorphGeometry, size: f64, payload: &Payload) -> Result<Vector3<f64>> {
    geom.check_size(size)?;
    payload.validate()?;
    let parts = geom.point_masses(size)?;
    weighted_cog(&parts, payload)
}

fn weighted_cog(parts: &[(f64, Vector3<f64>, Matrix3<f64>)], payload: &Payload) -> Result<Vector3<f64>> {
    let mut total = payload.mass;
    let mut moment = payload.position * payload.mass;
    for (m, r, _) in parts {
        total += m;
        moment += r * *m;
    }
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("total mass is zero".into()));
    }
    Ok(moment / total)
}

/// Full mass properties and allocation matrix at side length `size`.
pub fn total_inertia(geom: &MorphGeometry, size: f64, payload: &Payload) -> Result<VehicleProperties> {
    geom.check_size(size)?;
    payload.validate()?;
    let parts = geom.point_masses(size)?;
    let cog = weighted_cog(&parts, payload)?;
    let mut j = Matrix3::zeros();
    let mut mass = payload.mass;
    for (m, r, j_own) in &parts {
        j += j_own + parallel_axis(*m, &(r - cog));
        mass += m;
    }
    if payload.mass > 0.0 {
        j += payload.inertia + parallel_axis(payload.mass, &(payload.position - cog));
    }
    let j = (j + j.transpose()) * 0.5;
    VehicleProperties::new(
        size,
        mass,
        cog,
        j,
        geom.rotor_positions(size),
        geom.spin_signs,
        geom.thrust_coefficient,
        geom.torque_coefficient,
    )
}

/// Thrust-to-wrench map: row 0 collective thrust, rows 1-3 body torques
/// about the COG, row 3 the rotor drag torque `±k_c/k_t` per unit thrust.
pub fn allocation_matrix(
    cog: &Vector3<f64>,
    rotor_positions: &[Vector3<f64>; 4],
    spin_signs: &[f64; 4],
    thrust_coefficient: f64,
    torque_coefficient: f64,
) -> Result<Matrix4<f64>> {
    if spin_signs.iter().any(|s| s.abs() != 1.0) || (0..4).any(|j| spin_signs[j] == spin_signs[(j + 1) % 4]) {
        return Err(Error::Domain("spin signs must alternate ±1 around the ring".into()));
    }
    let ratio = torque_coefficient / thrust_coefficient;
    let mut h = Matrix4::zeros();
    for (j, l) in rotor_positions.iter().enumerate() {
        h[(0, j)] = 1.0;
        h[(1, j)] = l.y - cog.y;
        h[(2, j)] = cog.x - l.x;
        h[(3, j)] = spin_signs[j] * ratio;
    }
    Ok(h)
}

/// Mass properties and actuator map of the vehicle at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleProperties {
    pub size: f64,
    pub mass: f64,
    pub cog: Vector3<f64>,
    pub inertia: Matrix3<f64>,
    pub inertia_inv: Matrix3<f64>,
    pub allocation: Matrix4<f64>,
    pub allocation_inv: Matrix4<f64>,
    pub rotor_positions: [Vector3<f64>; 4],
    pub thrust_coefficient: f64,
    pub torque_coefficient: f64,
}

impl VehicleProperties {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        size: f64,
        mass: f64,
        cog: Vector3<f64>,
        inertia: Matrix3<f64>,
        rotor_positions: [Vector3<f64>; 4],
        spin_signs: [f64; 4],
        thrust_coefficient: f64,
        torque_coefficient: f64,
    ) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidProperties("mass must be > 0".into()));
        }
        let scale = inertia.amax();
        if !crate::math::is_symmetric(&inertia, 1e-12 * scale.max(1e-300)) {
            return Err(Error::InvalidProperties("inertia is not symmetric".into()));
        }
        let moments = principal_moments(&inertia);
        if !(moments.min() > 0.0) || !satisfies_triangle_inequality(&moments, 1e-12 * scale) {
            return Err(Error::InvalidProperties(format!("inertia is not physical: moments {moments:?}")));
        }
        let inertia_inv = inertia.try_inverse().ok_or_else(|| Error::InvalidProperties("singular inertia".into()))?;
        let allocation =
            allocation_matrix(&cog, &rotor_positions, &spin_signs, thrust_coefficient, torque_coefficient)?;
        let allocation_inv =
            allocation.try_inverse().ok_or_else(|| Error::Allocation("allocation matrix is singular".into()))?;
        Ok(Self {
            size,
            mass,
            cog,
            inertia,
            inertia_inv,
            allocation,
            allocation_inv,
            rotor_positions,
            thrust_coefficient,
            torque_coefficient,
        })
    }

    /// Same vehicle with a different inertia tensor.
    pub fn with_inertia(&self, inertia: Matrix3<f64>) -> Result<Self> {
        let spin = self.spin_signs();
        Self::new(
            self.size,
            self.mass,
            self.cog,
            inertia,
            self.rotor_positions,
            spin,
            self.thrust_coefficient,
            self.torque_coefficient,
        )
    }

    pub fn spin_signs(&self) -> [f64; 4] {
        std::array::from_fn(|j| self.allocation[(3, j)].signum())
    }

    /// Rotor thrusts that produce `wrench = (T, τx, τy, τz)`.
    pub fn thrusts_for(&self, wrench: &Vector4<f64>) -> Vector4<f64> {
        self.allocation_inv * wrench
    }

    /// Rotor thrusts that hold a level hover: `H t = (m g, 0, 0, 0)`.
    pub fn hover_thrusts(&self, gravity: f64) -> Vector4<f64> {
        self.thrusts_for(&Vector4::new(self.mass * gravity, 0.0, 0.0, 0.0))
    }
}

/// Symmetric vehicle used by tests and examples: point-symmetric layout,
/// rotors at the corners of a square of side `size`, COG at the center.
pub fn symmetric_properties(size: f64, mass: f64, inertia_diag: Vector3<f64>) -> Result<VehicleProperties> {
    let h = size / 2.0;
    let rotors =
        [Vector3::new(h, h, 0.0), Vector3::new(-h, h, 0.0), Vector3::new(-h, -h, 0.0), Vector3::new(h, -h, 0.0)];
    VehicleProperties::new(
        size,
        mass,
        Vector3::zeros(),
        Matrix3::from_diagonal(&inertia_diag),
        rotors,
        SPIN_SIGNS,
        crate::THRUST_COEFFICIENT,
        crate::TORQUE_COEFFICIENT,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cuboid(name: &str, mass: f64, size: [f64; 3], at: [f64; 3]) -> ComponentSpec {
        ComponentSpec {
            name: name.into(),
            mass,
            shape: Shape::Cuboid { size: Vector3::from(size) },
            mount: Mount::fixed(Vector3::from(at)),
            yaw: 0.0,
        }
    }

    #[test]
    fn cylinder_inertia_by_substitution() {
        let spec = ComponentSpec {
            name: "motor".into(),
            mass: 0.1,
            shape: Shape::MotorCylinder { radius: 0.01, height: 0.02 },
            mount: Mount::fixed(Vector3::zeros()),
            yaw: 0.0,
        };
        let j = primitive_inertia(&spec).unwrap();
        assert_relative_eq!(j[(0, 0)], 5.8333333333e-6, max_relative = 1e-9);
        assert_relative_eq!(j[(1, 1)], 5.8333333333e-6, max_relative = 1e-9);
        assert_relative_eq!(j[(2, 2)], 5.0e-6, max_relative = 1e-12);
    }

    #[test]
    fn unit_cube_inertia() {
        let j = primitive_inertia(&cuboid("cube", 1.0, [1.0, 1.0, 1.0], [0.0; 3])).unwrap();
        assert_relative_eq!(j, Matrix3::identity() / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn module_kind_is_rejected_by_primitive_inertia() {
        let spec = ComponentSpec {
            name: "m".into(),
            mass: 1.0,
            shape: Shape::ModuleComposite(ModuleShape { outer: Vector3::new(1.0, 1.0, 1.0), cutouts: vec![] }),
            mount: Mount::fixed(Vector3::zeros()),
            yaw: 0.0,
        };
        assert!(matches!(primitive_inertia(&spec), Err(Error::Domain(_))));
        assert!(matches!(module_inertia(&cuboid("c", 1.0, [1.0; 3], [0.0; 3])), Err(Error::Domain(_))));
    }

    #[test]
    fn module_without_cutouts_is_plain_cuboid() {
        let shape = ModuleShape { outer: Vector3::new(0.3, 0.2, 0.05), cutouts: vec![] };
        let (cog, j) = module_mass_properties(&shape, 0.7).unwrap();
        assert_eq!(cog, Vector3::zeros());
        assert_relative_eq!(j, cuboid_inertia(0.7, &shape.outer), epsilon = 1e-15);
    }

    #[test]
    fn centered_cutout_keeps_inertia_diagonal() {
        let shape = ModuleShape {
            outer: Vector3::new(0.3, 0.2, 0.05),
            cutouts: vec![Cutout { size: Vector3::new(0.1, 0.1, 0.05), offset: Vector3::zeros() }],
        };
        let (cog, j) = module_mass_properties(&shape, 0.5).unwrap();
        assert!(cog.norm() < 1e-15);
        assert!(j[(0, 1)].abs() < 1e-15 && j[(0, 2)].abs() < 1e-15 && j[(1, 2)].abs() < 1e-15);
    }

    #[test]
    fn cutout_outside_or_overlapping_is_invalid() {
        let outside = ModuleShape {
            outer: Vector3::new(0.1, 0.1, 0.1),
            cutouts: vec![Cutout { size: Vector3::new(0.1, 0.1, 0.1), offset: Vector3::new(0.05, 0.0, 0.0) }],
        };
        assert!(matches!(module_mass_properties(&outside, 1.0), Err(Error::InvalidGeometry(_))));
        let c = Cutout { size: Vector3::new(0.04, 0.04, 0.1), offset: Vector3::zeros() };
        let overlap = ModuleShape { outer: Vector3::new(0.1, 0.1, 0.1), cutouts: vec![c.clone(), c] };
        assert!(matches!(module_mass_properties(&overlap, 1.0), Err(Error::InvalidGeometry(_))));
    }

    fn symmetric_geometry() -> MorphGeometry {
        let mut components = Vec::new();
        for i in 0..4 {
            let yaw = i as f64 * std::f64::consts::FRAC_PI_2;
            components.push(ComponentSpec {
                name: format!("corner{i}"),
                mass: 0.2,
                shape: Shape::MotorCylinder { radius: 0.01, height: 0.02 },
                mount: Mount { base: Vector3::zeros(), per_length: Vector3::new(0.5, 0.5, 0.0) }.rotated(yaw),
                yaw,
            });
        }
        components.push(cuboid("battery", 0.3, [0.1, 0.04, 0.03], [0.0; 3]));
        components.push(cuboid("board", 0.1, [0.05, 0.05, 0.01], [0.0; 3]));
        components.push(cuboid("servo", 0.05, [0.03, 0.02, 0.03], [0.0; 3]));
        let corner = Mount { base: Vector3::zeros(), per_length: Vector3::new(0.5, 0.5, 0.0) };
        MorphGeometry {
            components,
            l_min: 0.284,
            l_max: 0.414,
            rotors: std::array::from_fn(|i| corner.rotated(i as f64 * std::f64::consts::FRAC_PI_2)),
            spin_signs: SPIN_SIGNS,
            thrust_coefficient: 7.19544e-9,
            torque_coefficient: 1.07932e-10,
        }
    }

    #[test]
    fn symmetric_layout_has_centered_cog() {
        let g = symmetric_geometry();
        g.validate().unwrap();
        for size in [0.284, 0.3, 0.414] {
            let c = center_of_gravity(&g, size, &Payload::none()).unwrap();
            assert!(c.norm() < 1e-15, "{c:?}");
        }
    }

    #[test]
    fn size_outside_range_is_domain_error() {
        let g = symmetric_geometry();
        assert!(matches!(center_of_gravity(&g, 0.5, &Payload::none()), Err(Error::Domain(_))));
        assert!(matches!(total_inertia(&g, 0.2, &Payload::none()), Err(Error::Domain(_))));
    }

    #[test]
    fn equal_thrusts_give_pure_collective() {
        let g = symmetric_geometry();
        let p = total_inertia(&g, 0.414, &Payload::none()).unwrap();
        let w = p.allocation * Vector4::repeat(2.5);
        assert!((w - Vector4::new(10.0, 0.0, 0.0, 0.0)).amax() < 1e-14);
        let arms_small = total_inertia(&g, 0.284, &Payload::none()).unwrap().allocation;
        for j in 0..4 {
            for row in 1..3 {
                assert_relative_eq!(arms_small[(row, j)], p.allocation[(row, j)] * 0.284 / 0.414, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn allocation_rows() {
        let g = symmetric_geometry();
        let p = total_inertia(&g, 0.414, &Payload::none()).unwrap();
        let ratio = 1.07932e-10 / 7.19544e-9;
        for j in 0..4 {
            assert_eq!(p.allocation[(0, j)], 1.0);
            assert_relative_eq!(p.allocation[(3, j)].abs(), ratio, max_relative = 1e-15);
        }
        assert!(allocation_matrix(&Vector3::zeros(), &p.rotor_positions, &[1.0, 1.0, -1.0, -1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn payload_adds_mass_and_shifts_cog() {
        let g = symmetric_geometry();
        let payload = Payload::solid_box(0.3, Vector3::new(0.1, 0.1, 0.1), Vector3::new(0.0, 0.0, -0.05));
        let p = total_inertia(&g, 0.3, &payload).unwrap();
        assert_relative_eq!(p.mass, g.dry_mass() + 0.3, epsilon = 1e-15);
        assert_relative_eq!(p.cog.z, -0.05 * 0.3 / p.mass, epsilon = 1e-15);
    }

    #[test]
    fn invalid_payload_is_rejected() {
        let mut bad = Payload::none();
        bad.mass = 0.1;
        bad.inertia = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 5.0));
        assert!(bad.validate().is_err());
        bad.inertia = Matrix3::identity();
        bad.mass = -1.0;
        assert!(bad.validate().is_err());
    }
}
