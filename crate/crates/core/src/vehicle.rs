//! Vehicle documents: loading, validation, payload composition and
//! randomization overlays.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuation::{ActuatorSpec, MlpWeights, RotorModel};
use crate::dr::{DrKey, Mode, Overlay, Sample};
use crate::error::{Error, Result};
use crate::hydrodynamics::{HydroCoeffs, MassMatrix, RigidBodyParams};
use crate::serde_util;

pub const VEHICLE_SCHEMA_VERSION: u32 = 1;

const BUILTINS: [(&str, &str); 5] = [
    ("bluerov", include_str!("../vehicles/bluerov.toml")),
    (
        "bluerov_heavy",
        include_str!("../vehicles/bluerov_heavy.toml"),
    ),
    ("lauv", include_str!("../vehicles/lauv.toml")),
    ("iauv", include_str!("../vehicles/iauv.toml")),
    ("hauv", include_str!("../vehicles/hauv.toml")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(name, _)| *name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Radius of a sphere enclosing the hull; tasks size their bounds from it.
    pub bounding_radius_m: f64,
    /// Where a randomized payload attaches unless the overlay says otherwise.
    #[serde(default, with = "serde_util::vec3")]
    pub payload_attach_m: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub geometry: Geometry,
    pub rigid_body: RigidBodyParams,
    pub hydrodynamics: HydroCoeffs,
    #[serde(rename = "actuator")]
    pub actuators: Vec<ActuatorSpec>,
}

impl VehicleConfig {
    /// Parses and validates a TOML document. Relative `weights_file` paths are
    /// resolved against `base_dir` (the current directory when `None`).
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut config: VehicleConfig =
            toml::from_str(text).map_err(|e| Error::parse("vehicle config", e))?;
        config.resolve_weights(base_dir)?;
        config.actuators.sort_by_key(|a| a.index);
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("vehicle config serializes")
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let (_, text) = BUILTINS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::UnknownVehicle(name.to_string()))?;
        Self::from_toml(text, None)
    }

    fn resolve_weights(&mut self, base_dir: Option<&Path>) -> Result<()> {
        for act in &mut self.actuators {
            if let RotorModel::DataDriven {
                weights_file: Some(file),
                weights,
            } = &mut act.rotor_model
            {
                if weights.is_some() {
                    continue;
                }
                let path = match base_dir {
                    Some(dir) if Path::new(file.as_str()).is_relative() => dir.join(file.as_str()),
                    _ => PathBuf::from(file.as_str()),
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::invalid(
                        format!("actuators[{}].rotor_model.weights_file", act.index),
                        format!("cannot read {}: {e}", path.display()),
                    )
                })?;
                *weights = Some(Arc::new(MlpWeights::from_json(&text)?));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != VEHICLE_SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!(
                    "expected {VEHICLE_SCHEMA_VERSION}, got {}",
                    self.schema_version
                ),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        if !(self.geometry.bounding_radius_m.is_finite() && self.geometry.bounding_radius_m > 0.0) {
            return Err(Error::invalid("geometry.bounding_radius_m", "must be > 0"));
        }
        if !self.geometry.payload_attach_m.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("geometry.payload_attach_m", "non-finite"));
        }
        self.rigid_body.validate()?;
        self.hydrodynamics.validate()?;
        MassMatrix::from_parts(&self.rigid_body, &self.hydrodynamics)?;
        if self.actuators.is_empty() {
            return Err(Error::invalid(
                "actuators",
                "at least one actuator is required",
            ));
        }
        let mut seen = vec![false; self.actuators.len()];
        for act in &self.actuators {
            match seen.get_mut(act.index) {
                Some(true) => return Err(Error::DuplicateActuator(act.index)),
                Some(slot) => *slot = true,
                None => {
                    if self
                        .actuators
                        .iter()
                        .filter(|a| a.index == act.index)
                        .count()
                        > 1
                    {
                        return Err(Error::DuplicateActuator(act.index));
                    }
                    return Err(Error::invalid(
                        format!("actuators[{}].index", act.index),
                        format!(
                            "indices must be contiguous from 0 to {}",
                            self.actuators.len() - 1
                        ),
                    ));
                }
            }
        }
        for act in &self.actuators {
            act.validate()?;
        }
        Ok(())
    }

    /// Width of one command row for this vehicle.
    pub fn command_width(&self) -> usize {
        self.actuators.iter().map(|a| a.channels()).sum()
    }

    pub fn buoyancy(&self) -> f64 {
        self.hydrodynamics.buoyancy(&self.rigid_body)
    }

    pub fn weight(&self) -> f64 {
        self.rigid_body.weight(self.hydrodynamics.gravity)
    }
}

/// Loads a built-in vehicle by name, or a TOML document by path.
pub fn load_vehicle(name_or_path: &str) -> Result<VehicleConfig> {
    if let Some((_, text)) = BUILTINS.iter().find(|(n, _)| *n == name_or_path) {
        return VehicleConfig::from_toml(text, None);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::UnknownVehicle(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    VehicleConfig::from_toml(&text, path.parent())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub mass_kg: f64,
    #[serde(rename = "attach_position_m", with = "serde_util::vec3")]
    pub attach_position: Vector3<f64>,
}

impl Payload {
    pub fn new(mass_kg: f64, attach_position: Vector3<f64>) -> Result<Self> {
        if !(mass_kg.is_finite() && mass_kg >= 0.0) {
            return Err(Error::invalid("payload.mass_kg", "must be >= 0"));
        }
        if !attach_position.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("payload.attach_position_m", "non-finite"));
        }
        Ok(Self {
            mass_kg,
            attach_position,
        })
    }
}

/// Inertia of a point mass `m` at offset `r` about the origin.
fn point_inertia(m: f64, r: &Vector3<f64>) -> Matrix3<f64> {
    m * (Matrix3::identity() * r.norm_squared() - r * r.transpose())
}

/// Rigid body of the vehicle with a point-mass payload attached.
pub fn compose_rigid_body(rb: &RigidBodyParams, payload: &Payload) -> RigidBodyParams {
    if payload.mass_kg == 0.0 {
        return rb.clone();
    }
    let mass = rb.mass + payload.mass_kg;
    let cog = (rb.cog * rb.mass + payload.attach_position * payload.mass_kg) / mass;
    let inertia = rb.inertia
        + point_inertia(rb.mass, &(rb.cog - cog))
        + point_inertia(payload.mass_kg, &(payload.attach_position - cog));
    RigidBodyParams {
        mass,
        inertia: 0.5 * (inertia + inertia.transpose()),
        cog,
        cob: rb.cob,
        volume: rb.volume,
    }
}

pub fn compose_with_payload(config: &VehicleConfig, payload: &Payload) -> RigidBodyParams {
    compose_rigid_body(&config.rigid_body, payload)
}

fn scalar(key: DrKey, sample: &Sample) -> Result<f64> {
    sample
        .value
        .scalar()
        .ok_or_else(|| Error::invalid(format!("overlay[{key}]"), "expected a scalar"))
}

fn blend(base: f64, sample: &Sample, value: f64) -> f64 {
    match sample.mode {
        Mode::Ratio => base * value,
        Mode::Absolute => value,
    }
}

/// Applies the vehicle-level entries of `overlay` to a copy of `config`.
///
/// Ratio entries scale the nominal value, absolute entries replace it.
/// Environment entries (current, payload) are ignored here.
pub fn apply_overlay(config: &VehicleConfig, overlay: &Overlay) -> Result<VehicleConfig> {
    let mut out = config.clone();
    for (&key, sample) in overlay {
        if !key.allows(sample.mode) {
            return Err(Error::invalid(
                format!("overlay[{key}]"),
                format!("mode {:?} not supported", sample.mode),
            ));
        }
        if key.is_environmental() {
            continue;
        }
        match key {
            DrKey::Mass => {
                let v = scalar(key, sample)?;
                out.rigid_body.mass = blend(out.rigid_body.mass, sample, v);
            }
            DrKey::Volume => {
                let v = scalar(key, sample)?;
                out.rigid_body.volume = blend(out.rigid_body.volume, sample, v);
            }
            DrKey::Cobm => {
                let v = scalar(key, sample)?;
                let rb = &mut out.rigid_body;
                rb.cob.z = rb.cog.z + v * (rb.cob.z - rb.cog.z);
            }
            DrKey::Inertia => out.rigid_body.inertia *= scalar(key, sample)?,
            DrKey::AddedMass => out.hydrodynamics.added_mass *= scalar(key, sample)?,
            DrKey::Damping => {
                let v = scalar(key, sample)?;
                out.hydrodynamics.linear_damping *= v;
                out.hydrodynamics.quadratic_damping *= v;
            }
            DrKey::TimeConstant => {
                let v = scalar(key, sample)?;
                for act in &mut out.actuators {
                    if let RotorModel::FirstOrder { time_constant_s } = &mut act.rotor_model {
                        *time_constant_s = blend(*time_constant_s, sample, v);
                    }
                }
            }
            DrKey::ThrustCoeff => {
                let v = scalar(key, sample)?;
                for act in out.actuators.iter_mut().filter(|a| a.has_rotor()) {
                    act.thrust_coeff = blend(act.thrust_coeff, sample, v);
                }
            }
            DrKey::MountPositionJitter => {
                let offset = sample.value.vector().ok_or_else(|| {
                    Error::invalid(format!("overlay[{key}]"), "expected a 3-vector")
                })?;
                for act in &mut out.actuators {
                    act.mount_position += offset;
                }
            }
            DrKey::CurrentVelocity
            | DrKey::CurrentDirection
            | DrKey::PayloadMass
            | DrKey::PayloadPosition => {
                unreachable!("environmental keys are skipped")
            }
        }
    }
    out.validate()?;
    Ok(out)
}

/// Parses an overlay given as a JSON object such as `{"mass*": 1.1}`.
/// Bare numbers take the key's default mode.
pub fn overlay_from_json(text: &str) -> Result<Overlay> {
    let raw: std::collections::BTreeMap<String, serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::parse("overlay", e))?;
    raw.into_iter()
        .map(|(name, value)| {
            let key: DrKey = name.parse()?;
            let mode = if key.allows(Mode::Ratio) && name.ends_with('*') {
                Mode::Ratio
            } else {
                Mode::Absolute
            };
            let sample = match value {
                serde_json::Value::Number(n) => Sample {
                    mode,
                    value: crate::dr::SampleValue::Scalar(n.as_f64().unwrap_or(f64::NAN)),
                },
                other => serde_json::from_value(other)
                    .map_err(|e| Error::parse(format!("overlay[{name}]"), e))?,
            };
            Ok((key, sample))
        })
        .collect()
}
