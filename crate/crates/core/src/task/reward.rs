//! Per-step reward functions and the docking contact predicate.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;
use crate::serde_util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StationWeights {
    pub position: f64,
    pub attitude: f64,
    pub velocity: f64,
    pub command_rate: f64,
    /// Paid each step the vehicle is within `tolerance_m` of the target.
    pub bonus: f64,
    pub tolerance_m: f64,
}

impl Default for StationWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            attitude: 0.2,
            velocity: 0.05,
            command_rate: 0.01,
            bonus: 0.5,
            tolerance_m: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingWeights {
    pub position: f64,
    pub velocity: f64,
    pub command_rate: f64,
}

impl Default for TrackingWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            velocity: 0.1,
            command_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DockingWeights {
    /// Per-step shaping on distance to the dock centre.
    pub position: f64,
    /// Terminal reward for a perfect contact.
    pub contact: f64,
    pub contact_distance: f64,
    pub contact_speed: f64,
    pub contact_attitude: f64,
}

impl Default for DockingWeights {
    fn default() -> Self {
        Self {
            position: 0.1,
            contact: 50.0,
            contact_distance: 40.0,
            contact_speed: 20.0,
            contact_attitude: 10.0,
        }
    }
}

/// `−w_p‖e_p‖ − w_a‖e_att‖ − w_v‖ν‖ − w_u‖Δu‖ + w_b·[‖e_p‖ < tol]`.
pub fn reward_station_keeping(
    w: &StationWeights,
    position_error: &Vector3<f64>,
    attitude_error: &Vector3<f64>,
    nu: &Vector6<f64>,
    command_delta: f64,
) -> f64 {
    let ep = position_error.norm();
    let inside = if ep < w.tolerance_m { w.bonus } else { 0.0 };
    -w.position * ep
        - w.attitude * attitude_error.norm()
        - w.velocity * nu.norm()
        - w.command_rate * command_delta
        + inside
}

/// `−w_p‖p − p_ref‖ − w_v‖v − v_ref‖ − w_u‖Δu‖`, velocities in NED.
pub fn reward_tracking(
    w: &TrackingWeights,
    position: &Vector3<f64>,
    velocity_ned: &Vector3<f64>,
    p_ref: &Vector3<f64>,
    v_ref: &Vector3<f64>,
    command_delta: f64,
) -> f64 {
    -w.position * (position - p_ref).norm()
        - w.velocity * (velocity_ned - v_ref).norm()
        - w.command_rate * command_delta
}

/// Horizontal landing platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DockSpec {
    /// Centre of the platform surface, NED.
    #[serde(rename = "centre_m", with = "serde_util::vec3")]
    pub centre: Vector3<f64>,
    pub capture_radius_m: f64,
    /// Height of the vehicle reference point above its lowest point; contact
    /// fires when the reference point comes this close to the plane.
    #[serde(default)]
    pub contact_height_m: f64,
}

impl DockSpec {
    /// Height of the vehicle's contact point above the platform plane.
    pub fn height_above(&self, position: &Vector3<f64>) -> f64 {
        self.centre.z - position.z - self.contact_height_m
    }

    pub fn planar_distance(&self, position: &Vector3<f64>) -> f64 {
        (position.xy() - self.centre.xy()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Planar distance from the platform centre.
    pub distance_m: f64,
    pub speed_m_s: f64,
    /// Tilt of the body z-axis from vertical.
    pub attitude_rad: f64,
}

/// Tilt angle of the body z-axis away from NED down.
pub fn tilt_angle(pose: &Pose) -> f64 {
    let down = pose.attitude * Vector3::z();
    down.z.clamp(-1.0, 1.0).acos()
}

/// `w_c − w_d·distance − w_s·speed − w_a·tilt`.
pub fn docking_terminal_reward(w: &DockingWeights, contact: &Contact) -> f64 {
    w.contact
        - w.contact_distance * contact.distance_m
        - w.contact_speed * contact.speed_m_s
        - w.contact_attitude * contact.attitude_rad
}

/// Reward and contact event for one docking step.
///
/// Contact fires when the contact point crosses the platform plane between
/// `previous_height` (height above the plane before the step) and now, within
/// the capture radius. Passing the plane outside the radius is not contact.
pub fn step_docking(
    w: &DockingWeights,
    dock: &DockSpec,
    previous_height: f64,
    pose: &Pose,
    velocity_ned: &Vector3<f64>,
) -> (f64, Option<Contact>) {
    let shaping = -w.position * (pose.position - dock.centre).norm();
    let height = dock.height_above(&pose.position);
    let distance = dock.planar_distance(&pose.position);
    if previous_height > 0.0 && height <= 0.0 && distance <= dock.capture_radius_m {
        let contact = Contact {
            distance_m: distance,
            speed_m_s: velocity_ned.norm(),
            attitude_rad: tilt_angle(pose),
        };
        (
            shaping + docking_terminal_reward(w, &contact),
            Some(contact),
        )
    } else {
        (shaping, None)
    }
}
