//! Parametric ring layout: four identical corner modules, each carrying a
//! rotor at the footprint corner, plus battery, servo and flight board near
//! the center. The board mass is whatever remains of the total mass.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::{ComponentSpec, Cutout, ModuleShape, MorphGeometry, Mount, Shape, SPIN_SIGNS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutParams {
    pub total_mass: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub thrust_coefficient: f64,
    pub torque_coefficient: f64,

    pub motor_mass: f64,
    pub motor_radius: f64,
    pub motor_height: f64,
    pub motor_z: f64,

    pub module_mass: f64,
    /// Distance from the footprint corner to the module's outer-cuboid center, per axis.
    pub module_inset: f64,
    pub module_side: f64,
    pub module_height: f64,
    /// Inner cutout side as a fraction of `module_side`.
    pub module_cutout_ratio: f64,
    /// Side of the square rail slot cut at the module's outer corner.
    pub module_slot: f64,
    pub module_z: f64,

    pub battery_mass: f64,
    pub battery_size: [f64; 3],
    /// Battery sits at `x = -battery_x_ratio * L`.
    pub battery_x_ratio: f64,
    pub battery_z: f64,

    pub servo_mass: f64,
    pub servo_size: [f64; 3],
    /// Servo sits at `y = servo_y_offset - servo_y_ratio * L`.
    pub servo_y_ratio: f64,
    pub servo_y_offset: f64,
    pub servo_z: f64,

    pub board_size: [f64; 3],
    /// Board sits at `x = board_x_ratio * L`.
    pub board_x_ratio: f64,
    pub board_z: f64,
    pub board_min_mass: f64,
}

impl Default for LayoutParams {
    /// Hand-measured nominal layout; the shipped config carries the
    /// calibrated values.
    fn default() -> Self {
        Self {
            total_mass: crate::VEHICLE_MASS,
            l_min: crate::L_MIN,
            l_max: crate::L_MAX,
            thrust_coefficient: crate::THRUST_COEFFICIENT,
            torque_coefficient: crate::TORQUE_COEFFICIENT,
            motor_mass: 0.034,
            motor_radius: 0.014,
            motor_height: 0.018,
            motor_z: -0.015,
            module_mass: 0.22,
            module_inset: 0.05,
            module_side: 0.12,
            module_height: 0.012,
            module_cutout_ratio: 0.5,
            module_slot: 0.015,
            module_z: 0.0,
            battery_mass: 0.22,
            battery_size: [0.11, 0.036, 0.038],
            battery_x_ratio: 0.35,
            battery_z: 0.03,
            servo_mass: 0.07,
            servo_size: [0.04, 0.02, 0.038],
            servo_y_ratio: 0.3,
            servo_y_offset: 0.0,
            servo_z: -0.02,
            board_size: [0.09, 0.09, 0.012],
            board_x_ratio: 0.05,
            board_z: 0.02,
            board_min_mass: 0.02,
        }
    }
}

impl LayoutParams {
    /// Result of [`calibrate_layout`](super::calibrate_layout) on the default
    /// targets from the nominal layout (several parameters end on their
    /// bounds, so the fit is a compromise, not an exact match).
    pub fn calibrated() -> Self {
        Self {
            module_mass: 0.282445486758054,
            module_inset: 0.04749573324936754,
            module_side: 0.06,
            module_cutout_ratio: 0.4136097301207056,
            module_z: 0.0013304617126219287,
            battery_mass: 0.2611447506641297,
            battery_x_ratio: 0.45,
            battery_z: 0.0013402405212171848,
            servo_mass: 0.11807330230365445,
            servo_y_ratio: 0.45,
            servo_y_offset: 0.06,
            servo_z: 0.0013371110492601981,
            board_x_ratio: 0.45,
            board_z: 0.0013361326296494694,
            ..Self::default()
        }
    }
}

/// A fitted layout parameter with its admissible range.
pub struct FreeParameter {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    get: fn(&LayoutParams) -> f64,
    set: fn(&mut LayoutParams, f64),
}

macro_rules! free {
    ($field:ident, $lo:expr, $hi:expr) => {
        FreeParameter { name: stringify!($field), lower: $lo, upper: $hi, get: |p| p.$field, set: |p, v| p.$field = v }
    };
}

/// Parameters adjusted by calibration; everything else in [`LayoutParams`]
/// stays at its nominal value.
pub const FREE_PARAMETERS: [FreeParameter; 14] = [
    free!(module_mass, 0.05, 0.4),
    free!(module_inset, 0.0, 0.13),
    free!(module_side, 0.06, 0.2),
    free!(module_cutout_ratio, 0.1, 0.7),
    free!(module_z, -0.03, 0.03),
    free!(battery_mass, 0.1, 0.4),
    free!(battery_x_ratio, 0.0, 0.45),
    free!(battery_z, -0.06, 0.08),
    free!(servo_mass, 0.03, 0.15),
    free!(servo_y_ratio, 0.0, 0.45),
    free!(servo_y_offset, 0.0, 0.06),
    free!(servo_z, -0.06, 0.06),
    free!(board_x_ratio, 0.0, 0.45),
    free!(board_z, -0.06, 0.08),
];

impl LayoutParams {
    pub fn free_values(&self) -> Vec<f64> {
        FREE_PARAMETERS.iter().map(|p| (p.get)(self)).collect()
    }

    pub fn with_free_values(&self, values: &[f64]) -> Self {
        let mut out = self.clone();
        for (p, v) in FREE_PARAMETERS.iter().zip(values) {
            (p.set)(&mut out, *v);
        }
        out
    }

    pub fn board_mass(&self) -> f64 {
        self.total_mass - 4.0 * (self.motor_mass + self.module_mass) - self.battery_mass - self.servo_mass
    }

    pub fn geometry(&self) -> Result<MorphGeometry> {
        let board_mass = self.board_mass();
        if board_mass < self.board_min_mass {
            return Err(Error::InvalidGeometry(format!(
                "component masses exceed the total: board would weigh {board_mass:.4} kg"
            )));
        }
        let corner = Mount { base: Vector3::zeros(), per_length: Vector3::new(0.5, 0.5, 0.0) };
        let motor_mount = Mount { base: Vector3::new(0.0, 0.0, self.motor_z), ..corner };
        let module_mount =
            Mount { base: Vector3::new(-self.module_inset, -self.module_inset, self.module_z), ..corner };
        let a = self.module_side;
        let c = self.module_cutout_ratio * a;
        let s = self.module_slot;
        let h = self.module_height;
        let module_shape = ModuleShape {
            outer: Vector3::new(a, a, h),
            cutouts: vec![
                // inner corner, facing the grasp aperture
                Cutout { size: Vector3::new(c, c, h), offset: Vector3::new(-(a - c) / 2.0, -(a - c) / 2.0, 0.0) },
                // rail slot at the outer corner
                Cutout { size: Vector3::new(s, s, h), offset: Vector3::new((a - s) / 2.0, (a - s) / 2.0, 0.0) },
            ],
        };

        let mut components = Vec::with_capacity(11);
        for i in 0..4 {
            let yaw = i as f64 * FRAC_PI_2;
            components.push(ComponentSpec {
                name: format!("module{}", i + 1),
                mass: self.module_mass,
                shape: Shape::ModuleComposite(module_shape.clone()),
                mount: module_mount.rotated(yaw),
                yaw,
            });
            components.push(ComponentSpec {
                name: format!("motor{}", i + 1),
                mass: self.motor_mass,
                shape: Shape::MotorCylinder { radius: self.motor_radius, height: self.motor_height },
                mount: motor_mount.rotated(yaw),
                yaw: 0.0,
            });
        }
        let along =
            |x: f64, y: f64, z: f64| Mount { base: Vector3::new(0.0, 0.0, z), per_length: Vector3::new(x, y, 0.0) };
        components.push(ComponentSpec {
            name: "battery".into(),
            mass: self.battery_mass,
            shape: Shape::Cuboid { size: Vector3::from(self.battery_size) },
            mount: along(-self.battery_x_ratio, 0.0, self.battery_z),
            yaw: 0.0,
        });
        components.push(ComponentSpec {
            name: "servo".into(),
            mass: self.servo_mass,
            shape: Shape::Cuboid { size: Vector3::from(self.servo_size) },
            mount: Mount {
                base: Vector3::new(0.0, self.servo_y_offset, self.servo_z),
                per_length: Vector3::new(0.0, -self.servo_y_ratio, 0.0),
            },
            yaw: 0.0,
        });
        components.push(ComponentSpec {
            name: "board".into(),
            mass: board_mass,
            shape: Shape::Cuboid { size: Vector3::from(self.board_size) },
            mount: along(self.board_x_ratio, 0.0, self.board_z),
            yaw: 0.0,
        });

        let geom = MorphGeometry {
            components,
            l_min: self.l_min,
            l_max: self.l_max,
            rotors: std::array::from_fn(|i| {
                Mount { base: Vector3::new(0.0, 0.0, self.motor_z), ..corner }.rotated(i as f64 * FRAC_PI_2)
            }),
            spin_signs: SPIN_SIGNS,
            thrust_coefficient: self.thrust_coefficient,
            torque_coefficient: self.torque_coefficient,
        };
        geom.validate()?;
        Ok(geom)
    }
}
