//! Actuator models: rotor dynamics, thrust and rudder force generation, and
//! aggregation of per-actuator wrenches into the body wrench `τ_act`.
//!
//! Every actuator consumes normalized commands in `[-1, 1]`. Propellers and
//! rudders take one channel each; tilt-rotors take two (rotor command, then
//! tilt command).

pub mod mlp;

use std::sync::Arc;

use nalgebra::{Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Wrench;
use crate::serde_util;

pub use mlp::{Activation, DenseLayer, MlpWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActuatorKind {
    Propeller,
    Rudder,
    Tiltrotor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RotorModel {
    /// Command maps straight to steady-state speed.
    #[default]
    ZeroOrder,
    FirstOrder {
        time_constant_s: f64,
    },
    /// Network inference. `weights_file` is resolved relative to the vehicle
    /// document at load time and its contents stored inline in `weights`.
    DataDriven {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights_file: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Arc<MlpWeights>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RudderParams {
    pub area_m2: f64,
    /// Lift-curve slope `c_Lα`.
    pub lift_slope_per_rad: f64,
    pub drag_coeff_zero: f64,
    /// Induced-drag factor `k_D` in `c_D = c_D0 + k_D·α²`.
    pub drag_coeff_quad: f64,
    pub stall_angle_rad: f64,
    /// Deflection reached at command ±1.
    pub max_angle_rad: f64,
    /// Chord direction at zero deflection; projected perpendicular to the
    /// hinge.
    #[serde(default = "default_chord", with = "serde_util::vec3")]
    pub chord_axis: Vector3<f64>,
}

fn default_chord() -> Vector3<f64> {
    Vector3::x()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltParams {
    /// Axis the thrust direction is rotated about.
    #[serde(with = "serde_util::vec3")]
    pub hinge_axis: Vector3<f64>,
    /// Tilt reached at command ±1.
    pub range_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorSpec {
    pub index: usize,
    pub kind: ActuatorKind,
    #[serde(rename = "mount_position_m", with = "serde_util::vec3")]
    pub mount_position: Vector3<f64>,
    /// Thrust direction for rotors, hinge axis for rudders.
    #[serde(with = "serde_util::vec3")]
    pub mount_axis: Vector3<f64>,
    #[serde(default)]
    pub rotor_model: RotorModel,
    #[serde(rename = "thrust_coeff_n_s2_rad2", default)]
    pub thrust_coeff: f64,
    /// Reaction torque coefficient about the thrust axis; 0 disables it.
    #[serde(rename = "torque_coeff_nm_s2_rad2", default)]
    pub torque_coeff: f64,
    #[serde(rename = "deadzone_rad_s", default)]
    pub deadzone: f64,
    #[serde(rename = "max_speed_rad_s", default)]
    pub max_speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rudder: Option<RudderParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorState {
    pub rotor_speed: f64,
    pub tilt_angle: f64,
    pub rudder_angle: f64,
}

impl ActuatorSpec {
    /// Number of command channels this actuator consumes.
    pub fn channels(&self) -> usize {
        match self.kind {
            ActuatorKind::Propeller | ActuatorKind::Rudder => 1,
            ActuatorKind::Tiltrotor => 2,
        }
    }

    pub fn has_rotor(&self) -> bool {
        matches!(self.kind, ActuatorKind::Propeller | ActuatorKind::Tiltrotor)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("actuators[{}].{f}", self.index);
        let unit =
            |v: &Vector3<f64>| v.iter().all(|x| x.is_finite()) && (v.norm() - 1.0).abs() < 1e-6;
        if !self.mount_position.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid(field("mount_position_m"), "non-finite"));
        }
        if !unit(&self.mount_axis) {
            return Err(Error::invalid(field("mount_axis"), "must be a unit vector"));
        }
        if self.has_rotor() {
            if !(self.max_speed.is_finite() && self.max_speed > 0.0) {
                return Err(Error::invalid(field("max_speed_rad_s"), "must be > 0"));
            }
            if !(self.deadzone.is_finite() && self.deadzone >= 0.0) {
                return Err(Error::invalid(field("deadzone_rad_s"), "must be >= 0"));
            }
            if !(self.thrust_coeff.is_finite() && self.thrust_coeff >= 0.0) {
                return Err(Error::invalid(
                    field("thrust_coeff_n_s2_rad2"),
                    "must be >= 0",
                ));
            }
            if !self.torque_coeff.is_finite() {
                return Err(Error::invalid(
                    field("torque_coeff_nm_s2_rad2"),
                    "non-finite",
                ));
            }
            match &self.rotor_model {
                RotorModel::ZeroOrder => {}
                RotorModel::FirstOrder { time_constant_s } => {
                    if !(time_constant_s.is_finite() && *time_constant_s > 0.0) {
                        return Err(Error::invalid(
                            field("rotor_model.time_constant_s"),
                            "must be > 0",
                        ));
                    }
                }
                RotorModel::DataDriven { weights, .. } => match weights {
                    Some(w) => w.validate()?,
                    None => return Err(Error::MissingWeights(self.index)),
                },
            }
        }
        match self.kind {
            ActuatorKind::Rudder => {
                let r = self.rudder.as_ref().ok_or_else(|| {
                    Error::invalid(field("rudder"), "required for rudder actuators")
                })?;
                let nonneg = [
                    ("rudder.area_m2", r.area_m2),
                    ("rudder.drag_coeff_zero", r.drag_coeff_zero),
                    ("rudder.drag_coeff_quad", r.drag_coeff_quad),
                    ("rudder.stall_angle_rad", r.stall_angle_rad),
                    ("rudder.max_angle_rad", r.max_angle_rad),
                ];
                for (name, v) in nonneg {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::invalid(field(name), "must be >= 0"));
                    }
                }
                if !r.lift_slope_per_rad.is_finite() {
                    return Err(Error::invalid(
                        field("rudder.lift_slope_per_rad"),
                        "non-finite",
                    ));
                }
                let chord = r.chord_axis - self.mount_axis * r.chord_axis.dot(&self.mount_axis);
                if chord.norm() < 1e-6 {
                    return Err(Error::invalid(
                        field("rudder.chord_axis"),
                        "parallel to the hinge",
                    ));
                }
            }
            ActuatorKind::Tiltrotor => {
                let t = self.tilt.as_ref().ok_or_else(|| {
                    Error::invalid(field("tilt"), "required for tiltrotor actuators")
                })?;
                if !unit(&t.hinge_axis) {
                    return Err(Error::invalid(
                        field("tilt.hinge_axis"),
                        "must be a unit vector",
                    ));
                }
                if !(t.range_rad.is_finite() && t.range_rad >= 0.0) {
                    return Err(Error::invalid(field("tilt.range_rad"), "must be >= 0"));
                }
            }
            ActuatorKind::Propeller => {}
        }
        Ok(())
    }
}

/// Advances rotor speed by one step of the configured rotor model.
///
/// Commands outside `[-1, 1]` are clamped.
pub fn rotor_step(
    spec: &ActuatorSpec,
    state: &ActuatorState,
    command: f64,
    dt: f64,
) -> Result<f64> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(Error::OutOfRange(format!(
            "rotor step requires dt > 0, got {dt}"
        )));
    }
    let u = command.clamp(-1.0, 1.0);
    let max = spec.max_speed;
    let n = state.rotor_speed;
    let next = match &spec.rotor_model {
        RotorModel::ZeroOrder => u * max,
        RotorModel::FirstOrder { time_constant_s } => n + dt * (u * max - n) / time_constant_s,
        RotorModel::DataDriven { weights, .. } => {
            let net = weights.as_ref().ok_or(Error::MissingWeights(spec.index))?;
            n + dt * net.eval(u, n / max) * max
        }
    };
    Ok(next.clamp(-max, max))
}

/// Rotor speed past the dead zone, sign preserved.
#[inline]
fn effective_speed(spec: &ActuatorSpec, n: f64) -> f64 {
    let excess = (n.abs() - spec.deadzone).max(0.0);
    excess.copysign(n)
}

/// Quadratic thrust with a symmetric dead zone: `T = c_t·ñ·|ñ|`.
#[inline]
pub fn propeller_thrust(spec: &ActuatorSpec, n: f64) -> f64 {
    let e = effective_speed(spec, n);
    spec.thrust_coeff * e * e.abs()
}

/// Reaction torque about the thrust axis: `Q = c_q·ñ·|ñ|`.
#[inline]
pub fn propeller_torque(spec: &ActuatorSpec, n: f64) -> f64 {
    let e = effective_speed(spec, n);
    spec.torque_coeff * e * e.abs()
}

/// Lift and drag on a rudder surface.
///
/// `local_flow` is the fluid velocity relative to the rudder, in the body
/// frame. Only the component in the rudder's plane of motion (perpendicular to
/// the hinge) contributes. Lift acts perpendicular to the flow and drag along
/// it, so drag always opposes the rudder's motion through the water.
pub fn rudder_wrench(
    spec: &ActuatorSpec,
    rudder_angle: f64,
    local_flow: &Vector3<f64>,
    fluid_density: f64,
) -> Wrench {
    let Some(r) = spec.rudder.as_ref() else {
        return Wrench::body(Vector3::zeros(), Vector3::zeros(), spec.mount_position);
    };
    let hinge = spec.mount_axis;
    let in_plane = local_flow - hinge * local_flow.dot(&hinge);
    let speed = in_plane.norm();
    if speed < 1e-12 {
        return Wrench::body(Vector3::zeros(), Vector3::zeros(), spec.mount_position);
    }
    // direction the rudder moves through the water
    let motion = -in_plane / speed;
    let chord0 = (r.chord_axis - hinge * r.chord_axis.dot(&hinge)).normalize();
    let (s, c) = rudder_angle.sin_cos();
    let chord = chord0 * c + hinge.cross(&chord0) * s;
    let mut alpha = motion.cross(&chord).dot(&hinge).atan2(motion.dot(&chord));
    // reversed flow: the trailing edge leads
    if alpha > std::f64::consts::FRAC_PI_2 {
        alpha -= std::f64::consts::PI;
    } else if alpha < -std::f64::consts::FRAC_PI_2 {
        alpha += std::f64::consts::PI;
    }
    let alpha = alpha.clamp(-r.stall_angle_rad, r.stall_angle_rad);
    let q = 0.5 * fluid_density * speed * speed * r.area_m2;
    let lift = q * r.lift_slope_per_rad * alpha;
    let drag = q * (r.drag_coeff_zero + r.drag_coeff_quad * alpha * alpha);
    let force = hinge.cross(&motion) * lift - motion * drag;
    Wrench::body(force, Vector3::zeros(), spec.mount_position)
}

/// Thrust direction of a rotor, including tilt for tilt-rotors.
#[inline]
pub fn thrust_axis(spec: &ActuatorSpec, state: &ActuatorState) -> Vector3<f64> {
    match (&spec.kind, &spec.tilt) {
        (ActuatorKind::Tiltrotor, Some(t)) if state.tilt_angle != 0.0 => {
            let rot = UnitQuaternion::from_axis_angle(
                &Unit::new_unchecked(t.hinge_axis),
                state.tilt_angle,
            );
            rot * spec.mount_axis
        }
        _ => spec.mount_axis,
    }
}

/// Wrench produced by one actuator at its mount point.
///
/// `nu` and `nu_c` are the body velocity and body-projected current; rudders
/// see the current-relative flow at their mount, including the rotational
/// contribution.
pub fn actuator_wrench(
    spec: &ActuatorSpec,
    state: &ActuatorState,
    nu: &Vector6<f64>,
    nu_c: &Vector6<f64>,
    fluid_density: f64,
) -> Wrench {
    match spec.kind {
        ActuatorKind::Propeller | ActuatorKind::Tiltrotor => {
            let axis = thrust_axis(spec, state);
            let thrust = propeller_thrust(spec, state.rotor_speed);
            let torque = if spec.torque_coeff != 0.0 {
                axis * propeller_torque(spec, state.rotor_speed)
            } else {
                Vector3::zeros()
            };
            Wrench::body(axis * thrust, torque, spec.mount_position)
        }
        ActuatorKind::Rudder => {
            let nu_r = nu - nu_c;
            let v = Vector3::new(nu_r[0], nu_r[1], nu_r[2]);
            let w = Vector3::new(nu_r[3], nu_r[4], nu_r[5]);
            let flow = -(v + w.cross(&spec.mount_position));
            rudder_wrench(spec, state.rudder_angle, &flow, fluid_density)
        }
    }
}

/// Sums body-frame wrenches into a generalized force about the body origin.
pub fn aggregate_wrenches(wrenches: &[Wrench]) -> Vector6<f64> {
    wrenches
        .iter()
        .fold(Vector6::zeros(), |acc, w| acc + w.resultant())
}

/// Applies one actuator's command slice for a step of length `dt`.
///
/// Rotor channels go through [`rotor_step`]; rudder and tilt angles follow
/// their command directly.
pub fn apply_command(
    spec: &ActuatorSpec,
    state: &mut ActuatorState,
    commands: &[f64],
    dt: f64,
) -> Result<()> {
    match spec.kind {
        ActuatorKind::Propeller => {
            state.rotor_speed = rotor_step(spec, state, commands[0], dt)?;
        }
        ActuatorKind::Tiltrotor => {
            state.rotor_speed = rotor_step(spec, state, commands[0], dt)?;
            let range = spec.tilt.as_ref().map_or(0.0, |t| t.range_rad);
            state.tilt_angle = commands[1].clamp(-1.0, 1.0) * range;
        }
        ActuatorKind::Rudder => {
            let max = spec.rudder.as_ref().map_or(0.0, |r| r.max_angle_rad);
            state.rudder_angle = commands[0].clamp(-1.0, 1.0) * max;
        }
    }
    Ok(())
}
