//! Scenario description and its TOML form.
//!
//! A scenario file only needs the keys it changes: it is merged table by
//! table over the shipped defaults (`configs/ringrotor_default.cfg`).

use std::path::Path;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::reference::{Figure8, Trajectory, Waypoints};
use crate::baselines::{LqrConfig, PidGains};
use crate::error::{Error, Result};
use crate::geometry::{CalibrationTargets, LayoutParams, Payload};
use crate::nmpc::NmpcConfig;
use crate::servo::ServoParams;

pub const DEFAULT_CONFIG: &str = include_str!("../../configs/ringrotor_default.cfg");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerKind {
    Pid,
    Lqr,
    Nmpc,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [ControllerKind::Pid, ControllerKind::Lqr, ControllerKind::Nmpc];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Pid => "pid",
            ControllerKind::Lqr => "lqr",
            ControllerKind::Nmpc => "nmpc",
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pid" => Ok(ControllerKind::Pid),
            "lqr" => Ok(ControllerKind::Lqr),
            "nmpc" => Ok(ControllerKind::Nmpc),
            other => Err(Error::InvalidConfig(format!("unknown controller '{other}' (pid, lqr, nmpc)"))),
        }
    }
}

/// Side-length reference over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MorphSchedule {
    Constant {
        size: f64,
    },
    /// `mean + amplitude · sin(2π t / period)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
    /// Piecewise-constant: each `[time, size]` holds from its time on; the
    /// first entry also applies before its time.
    Steps {
        points: Vec<[f64; 2]>,
    },
}

impl Default for MorphSchedule {
    fn default() -> Self {
        MorphSchedule::Constant { size: crate::L_MAX }
    }
}

impl MorphSchedule {
    pub fn size_at(&self, t: f64) -> f64 {
        match self {
            MorphSchedule::Constant { size } => *size,
            MorphSchedule::Sinusoid { mean, amplitude, period } => {
                mean + amplitude * (2.0 * std::f64::consts::PI * t / period).sin()
            }
            MorphSchedule::Steps { points } => {
                let mut size = points.first().map(|p| p[1]).unwrap_or(crate::L_MAX);
                for p in points {
                    if t >= p[0] {
                        size = p[1];
                    }
                }
                size
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MorphSchedule::Sinusoid { period, .. } if !(*period > 0.0) => {
                Err(Error::InvalidConfig("morph sinusoid period must be > 0".into()))
            }
            MorphSchedule::Steps { points } if points.is_empty() || points.windows(2).any(|w| w[1][0] < w[0][0]) => {
                Err(Error::InvalidConfig("morph steps must be non-empty and sorted by time".into()))
            }
            _ => Ok(()),
        }
    }
}

/// A payload rigidly attached between two instants (body frame placement).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadEvent {
    pub attach: f64,
    #[serde(default)]
    pub detach: Option<f64>,
    pub mass: f64,
    /// Solid box dimensions, m.
    pub size: [f64; 3],
    /// Payload COG in the body frame, m.
    pub position: [f64; 3],
}

impl PayloadEvent {
    pub fn payload(&self) -> Payload {
        Payload::solid_box(self.mass, Vector3::from(self.size), Vector3::from(self.position))
    }

    pub fn active_at(&self, t: f64) -> bool {
        t >= self.attach && self.detach.is_none_or(|d| t < d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    #[default]
    None,
    Constant,
    /// First-order low-pass filtered Gaussian noise.
    BandLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    /// Constant world-frame force, or the mean of the random one, N.
    pub force: [f64; 3],
    /// Constant body-frame torque, or its mean, N·m.
    pub torque: [f64; 3],
    /// Stationary standard deviation of the random force, N.
    pub force_std: f64,
    pub torque_std: f64,
    /// Corner frequency of the noise filter, Hz.
    pub bandwidth: f64,
}

impl Default for DisturbanceSpec {
    fn default() -> Self {
        Self {
            kind: DisturbanceKind::None,
            force: [0.0; 3],
            torque: [0.0; 3],
            force_std: 0.0,
            torque_std: 0.0,
            bandwidth: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapOrientation {
    /// Vertical slot crossed flying along +x; only the lateral (y) extent counts.
    #[default]
    Horizontal,
    /// Square hole in a horizontal frame crossed flying along z; both x and
    /// y extents count.
    VerticalHole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSpec {
    pub orientation: GapOrientation,
    /// Coordinate of the gap plane along the crossing axis, m.
    pub plane: f64,
    /// Opening width, m.
    pub width: f64,
    /// Required clearance: the vehicle must be narrower than `width − margin`.
    pub margin: f64,
    /// Depth of the crossing window around the plane, m.
    pub depth: f64,
}

impl Default for GapSpec {
    fn default() -> Self {
        Self { orientation: GapOrientation::Horizontal, plane: 0.0, width: 0.40, margin: 0.05, depth: 0.10 }
    }
}

/// Everything needed to run one closed-loop simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub controller: ControllerKind,
    pub seed: u64,
    pub control_hz: f64,
    pub physics_hz: f64,
    /// Tracking metrics ignore ticks before this time, s.
    pub metrics_start: f64,
    /// Linear drag acting on the simulated vehicle (not known to the controllers).
    pub drag_coefficient: f64,
    /// Start level and at rest at the first reference point instead of on
    /// the reference state.
    pub start_at_rest: bool,
    pub trajectory: Trajectory,
    pub morph: MorphSchedule,
    pub payload: Vec<PayloadEvent>,
    pub disturbance: DisturbanceSpec,
    pub gap: Option<GapSpec>,
    pub vehicle: LayoutParams,
    pub servo: ServoParams,
    pub nmpc: NmpcConfig,
    pub pid: PidGains,
    pub lqr: LqrConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "hover".into(),
            duration: 5.0,
            controller: ControllerKind::Nmpc,
            seed: 0,
            control_hz: 100.0,
            physics_hz: 1000.0,
            metrics_start: 0.0,
            drag_coefficient: 0.0,
            start_at_rest: false,
            trajectory: Trajectory::Waypoints(Waypoints::hover([0.0, 0.0, 1.0])),
            morph: MorphSchedule::default(),
            payload: Vec::new(),
            disturbance: DisturbanceSpec::default(),
            gap: None,
            vehicle: LayoutParams::calibrated(),
            servo: ServoParams::default(),
            nmpc: NmpcConfig::default(),
            pid: PidGains::default(),
            lqr: LqrConfig::default(),
        }
    }
}

impl Scenario {
    /// Physics substeps per control tick.
    pub fn substeps(&self) -> Result<usize> {
        let ratio = self.physics_hz / self.control_hz;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "physics rate {} Hz must be an integer multiple of the control rate {} Hz",
                self.physics_hz, self.control_hz
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !(self.control_hz > 0.0) {
            return Err(Error::InvalidConfig("duration and control rate must be > 0".into()));
        }
        self.substeps()?;
        self.trajectory.validate()?;
        self.morph.validate()?;
        self.servo.validate()?;
        self.nmpc.validate()?;
        self.pid.validate()?;
        self.lqr.validate()?;
        for (i, p) in self.payload.iter().enumerate() {
            let detach_ok = p.detach.is_none_or(|d| d > p.attach && d <= self.duration);
            if !(p.attach >= 0.0 && p.attach <= self.duration) || !detach_ok {
                return Err(Error::InvalidConfig(format!("payload event {i}: need 0 ≤ attach < detach ≤ duration")));
            }
            p.payload().validate()?;
        }
        if self.disturbance.kind == DisturbanceKind::BandLimited && !(self.disturbance.bandwidth > 0.0) {
            return Err(Error::InvalidConfig("disturbance bandwidth must be > 0".into()));
        }
        Ok(())
    }

    /// Parses a scenario file merged over the shipped defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let merged = merge_over_defaults(text)?;
        let sc: Scenario = merged.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn figure8(&self) -> Option<&Figure8> {
        match &self.trajectory {
            Trajectory::Figure8(f) => Some(f),
            _ => None,
        }
    }
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Parse(e.to_string()))
}

/// Recursively overlays `top` on `base`; arrays and scalars are replaced,
/// tables are merged. A table whose `kind` changes is replaced wholesale, so
/// variant-specific keys never leak between variants.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t))
                if b.get("kind") == t.get("kind") || t.get("kind").is_none() =>
            {
                merge(b, t)
            }
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

pub fn merge_over_defaults(text: &str) -> Result<toml::Table> {
    let mut base = parse_table(DEFAULT_CONFIG)?;
    merge(&mut base, parse_table(text)?);
    Ok(base)
}

/// Velocity sweep over controllers on a common base scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub speeds: Vec<f64>,
    pub controllers: Vec<ControllerKind>,
    /// Run length in figure-8 periods.
    pub laps: f64,
    pub scenario: Scenario,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            speeds: vec![1.5, 2.0, 2.5],
            controllers: ControllerKind::ALL.to_vec(),
            laps: 1.0,
            scenario: Scenario::default(),
        }
    }
}

impl BenchConfig {
    /// Parses a bench file; its `[scenario]` table is merged over the defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table = parse_table(text)?;
        let scenario_text = match table.remove("scenario") {
            Some(toml::Value::Table(t)) => toml::to_string(&t).map_err(|e| Error::Parse(e.to_string()))?,
            Some(_) => return Err(Error::Parse("`scenario` must be a table".into())),
            None => String::new(),
        };
        let scenario = Scenario::from_toml(&scenario_text)?;
        let mut bench: BenchConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        bench.scenario = scenario;
        if bench.controllers.len() < 2 {
            return Err(Error::InvalidConfig("a comparison needs at least two controllers".into()));
        }
        if bench.speeds.is_empty() || bench.speeds.iter().any(|v| !(*v > 0.0)) || !(bench.laps > 0.0) {
            return Err(Error::InvalidConfig("bench speeds and laps must be > 0".into()));
        }
        Ok(bench)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Calibration input file: targets plus an optional starting layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub targets: CalibrationTargets,
    pub initial: LayoutParams,
}

impl CalibrationConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_match_code_defaults() {
        let sc = Scenario::from_toml("").unwrap();
        assert_eq!(sc, Scenario::default());
    }

    #[test]
    fn partial_file_overrides_only_its_keys() {
        let sc = Scenario::from_toml("duration = 2.0\n[nmpc]\nhorizon = 10\n").unwrap();
        assert_eq!(sc.duration, 2.0);
        assert_eq!(sc.nmpc.horizon, 10);
        assert_eq!(sc.nmpc.dt, NmpcConfig::default().dt);
    }

    #[test]
    fn trajectory_variant_can_be_switched() {
        let sc = Scenario::from_toml("[trajectory]\nkind = \"figure8\"\nv_max = 1.5\n").unwrap();
        assert_eq!(sc.figure8().unwrap().v_max, 1.5);
    }

    #[test]
    fn unknown_keys_and_bad_events_are_rejected() {
        assert!(matches!(Scenario::from_toml("bogus = 1\n"), Err(Error::Parse(_))));
        let late = "[[payload]]\nattach = 3.0\ndetach = 2.0\nmass = 0.3\nsize = [0.1, 0.1, 0.1]\nposition = [0.0, 0.0, -0.05]\n";
        assert!(matches!(Scenario::from_toml(late), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn physics_rate_must_divide() {
        let sc = Scenario { physics_hz: 250.0, control_hz: 100.0, ..Scenario::default() };
        assert!(sc.substeps().is_err());
    }

    #[test]
    fn morph_steps_hold_values() {
        let m = MorphSchedule::Steps { points: vec![[1.0, 0.3], [2.0, 0.4]] };
        assert_eq!(m.size_at(0.0), 0.3);
        assert_eq!(m.size_at(1.5), 0.3);
        assert_eq!(m.size_at(2.0), 0.4);
    }
}
