//! Attitude representations, frame transforms and the body-velocity to
//! NED pose-rate map.
//!
//! Positions live in the north-east-down frame (z positive down). Attitude is
//! stored as a unit quaternion rotating body vectors into NED; Euler angles
//! (ZYX, yaw-pitch-roll) are only ever a derived view.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Pitch magnitude above which the Euler view is flagged as near-singular.
pub const GIMBAL_WARNING_PITCH: f64 = 89.9 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    /// Position in NED, metres.
    pub position: Vector3<f64>,
    /// Body to NED rotation.
    pub attitude: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, attitude: UnitQuaternion<f64>) -> Self {
        Self { position, attitude }
    }

    pub fn from_euler(position: Vector3<f64>, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position,
            attitude: euler_to_quat(roll, pitch, yaw),
        }
    }

    pub fn euler(&self) -> EulerAngles {
        quat_to_euler(&self.attitude)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.attitude.coords.iter().all(|v| v.is_finite())
    }
}

/// Body-frame linear (surge, sway, heave) and angular (p, q, r) rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyVelocity {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl BodyVelocity {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(nu: &Vector6<f64>) -> Self {
        Self {
            linear: nu.fixed_rows::<3>(0).into_owned(),
            angular: nu.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.linear
            .iter()
            .chain(self.angular.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    #[default]
    Body,
    Ned,
}

/// A force/torque pair acting at an application point.
///
/// `torque` is the moment about the application point itself (e.g. a
/// propeller reaction torque); the lever-arm contribution `point × force` is
/// added by [`Wrench::resultant`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: Frame,
    pub point: Vector3<f64>,
}

impl Default for Wrench {
    fn default() -> Self {
        Self::zero()
    }
}

impl Wrench {
    pub fn zero() -> Self {
        Self {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
            frame: Frame::Body,
            point: Vector3::zeros(),
        }
    }

    pub fn body(force: Vector3<f64>, torque: Vector3<f64>, point: Vector3<f64>) -> Self {
        Self {
            force,
            torque,
            frame: Frame::Body,
            point,
        }
    }

    /// Moment about the body origin: local torque plus `point × force`.
    pub fn torque_about_origin(&self) -> Vector3<f64> {
        self.torque + self.point.cross(&self.force)
    }

    /// Generalized force `[F; M_O]` about the frame origin.
    pub fn resultant(&self) -> Vector6<f64> {
        let m = self.torque_about_origin();
        Vector6::new(self.force.x, self.force.y, self.force.z, m.x, m.y, m.z)
    }

    pub fn is_finite(&self) -> bool {
        self.force
            .iter()
            .chain(self.torque.iter())
            .chain(self.point.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Set when |pitch| exceeds [`GIMBAL_WARNING_PITCH`]; the angles are still
    /// returned but roll and yaw are poorly conditioned.
    pub near_gimbal_lock: bool,
}

impl EulerAngles {
    pub fn as_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

/// ZYX Euler angles to a unit quaternion, `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
pub fn euler_to_quat(roll: f64, pitch: f64, yaw: f64) -> UnitQuaternion<f64> {
    let (sr, cr) = (0.5 * roll).sin_cos();
    let (sp, cp) = (0.5 * pitch).sin_cos();
    let (sy, cy) = (0.5 * yaw).sin_cos();
    let q = Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    );
    UnitQuaternion::from_quaternion(q)
}

/// ZYX Euler view of an attitude. Pitch lies in [-π/2, π/2], roll and yaw in
/// (-π, π].
pub fn quat_to_euler(q: &UnitQuaternion<f64>) -> EulerAngles {
    let r = q.to_rotation_matrix();
    let m = r.matrix();
    let pitch = (-m[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = wrap_half_open(m[(2, 1)].atan2(m[(2, 2)]));
    let yaw = wrap_half_open(m[(1, 0)].atan2(m[(0, 0)]));
    EulerAngles {
        roll,
        pitch,
        yaw,
        near_gimbal_lock: pitch.abs() > GIMBAL_WARNING_PITCH,
    }
}

/// Maps an angle from atan2's [-π, π] onto (-π, π].
fn wrap_half_open(a: f64) -> f64 {
    if a <= -std::f64::consts::PI {
        a + 2.0 * std::f64::consts::PI
    } else {
        a
    }
}

/// Wraps any angle onto (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Cross-product matrix: `skew(a) * b == a × b`.
#[inline]
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Kinematic map from body velocity to pose rates: `ṗ = R(q)·v` and
/// `q̇ = ½ q ⊗ (0, ω)`.
pub fn pose_rate(pose: &Pose, nu: &BodyVelocity) -> (Vector3<f64>, Quaternion<f64>) {
    let p_dot = pose.attitude * nu.linear;
    let omega = Quaternion::from_parts(0.0, nu.angular);
    let q_dot = pose.attitude.quaternion() * omega * 0.5;
    (p_dot, q_dot)
}

/// Advances a pose by `dt` under constant body velocity.
///
/// Position moves along the NED projection of the linear velocity at the
/// current attitude; attitude is right-multiplied by the exponential map of
/// `ω·dt` and renormalized.
pub fn integrate_pose(pose: &Pose, nu: &BodyVelocity, dt: f64) -> Pose {
    let position = pose.position + (pose.attitude * nu.linear) * dt;
    let delta = exp_map(&(nu.angular * dt));
    let q = pose.attitude.quaternion() * delta;
    Pose {
        position,
        attitude: UnitQuaternion::new_normalize(q),
    }
}

/// Quaternion exponential of a rotation vector (axis · angle).
#[inline]
pub fn exp_map(rotvec: &Vector3<f64>) -> Quaternion<f64> {
    let angle = rotvec.norm();
    if angle < 1e-12 {
        // second-order series; exact to double precision at this size
        Quaternion::new(
            1.0 - angle * angle / 8.0,
            0.5 * rotvec.x,
            0.5 * rotvec.y,
            0.5 * rotvec.z,
        )
    } else {
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / angle;
        Quaternion::new(c, k * rotvec.x, k * rotvec.y, k * rotvec.z)
    }
}

/// Rotation vector of a unit quaternion, taking the short way round.
pub fn log_map(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s < 1e-12 {
        return v * 2.0;
    }
    let angle = 2.0 * s.atan2(w);
    v * (angle / s)
}

/// Body-frame rotation vector taking `current` onto `target`.
pub fn attitude_error(current: &UnitQuaternion<f64>, target: &UnitQuaternion<f64>) -> Vector3<f64> {
    log_map(&(current.inverse() * target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn vclose(a: &Vector3<f64>, b: &Vector3<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    /// Independent oracle: the rotation matrix built by explicitly multiplying
    /// elementary rotations.
    fn zyx_matrix(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
        let rx = Matrix3::new(
            1.0,
            0.0,
            0.0,
            0.0,
            roll.cos(),
            -roll.sin(),
            0.0,
            roll.sin(),
            roll.cos(),
        );
        let ry = Matrix3::new(
            pitch.cos(),
            0.0,
            pitch.sin(),
            0.0,
            1.0,
            0.0,
            -pitch.sin(),
            0.0,
            pitch.cos(),
        );
        let rz = Matrix3::new(
            yaw.cos(),
            -yaw.sin(),
            0.0,
            yaw.sin(),
            yaw.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        rz * ry * rx
    }

    #[test]
    fn euler_identity() {
        let q = euler_to_quat(0.0, 0.0, 0.0);
        assert_eq!(q, UnitQuaternion::identity());
        let e = quat_to_euler(&UnitQuaternion::identity());
        assert_eq!(e.as_array(), [0.0, 0.0, 0.0]);
        assert!(!e.near_gimbal_lock);
    }

    #[test]
    fn yaw_quarter_turn_maps_x_to_y() {
        let q = euler_to_quat(0.0, 0.0, FRAC_PI_2);
        let v = q * Vector3::x();
        assert!(vclose(&v, &Vector3::y(), 1e-15));
    }

    #[test]
    fn euler_round_trip_examples() {
        let e = quat_to_euler(&euler_to_quat(0.1, 0.2, 0.3));
        assert!(close(e.roll, 0.1, 1e-9) && close(e.pitch, 0.2, 1e-9) && close(e.yaw, 0.3, 1e-9));
        let e = quat_to_euler(&euler_to_quat(0.3, 0.0, 0.0));
        assert!(close(e.roll, 0.3, 1e-9) && close(e.pitch, 0.0, 1e-9) && close(e.yaw, 0.0, 1e-9));
    }

    #[test]
    fn gimbal_flag_at_vertical_pitch() {
        let e = quat_to_euler(&euler_to_quat(0.0, FRAC_PI_2, 0.0));
        assert!(e.near_gimbal_lock);
        assert!(close(e.pitch, FRAC_PI_2, 1e-7));
        let e = quat_to_euler(&euler_to_quat(0.0, 89.0f64.to_radians(), 0.0));
        assert!(!e.near_gimbal_lock);
    }

    #[test]
    fn yaw_range_is_half_open() {
        let e = quat_to_euler(&euler_to_quat(0.0, 0.0, PI));
        assert!(close(e.yaw, PI, 1e-12));
        let e = quat_to_euler(&euler_to_quat(0.0, 0.0, -PI));
        assert!(e.yaw > 0.0);
        assert!(close(wrap_angle(-PI), PI, 0.0));
        assert!(close(wrap_angle(3.0 * PI + 0.5), -PI + 0.5, 1e-12));
    }

    #[test]
    fn pose_rate_examples() {
        let nu = BodyVelocity::new(Vector3::x(), Vector3::zeros());
        let (p_dot, _) = pose_rate(&Pose::identity(), &nu);
        assert_eq!(p_dot, Vector3::x());

        let pose = Pose::from_euler(Vector3::zeros(), 0.0, 0.0, FRAC_PI_2);
        let (p_dot, _) = pose_rate(&pose, &nu);
        let oracle = zyx_matrix(0.0, 0.0, FRAC_PI_2) * Vector3::x();
        assert!(vclose(&p_dot, &oracle, 1e-12));
        assert!(vclose(&p_dot, &Vector3::y(), 1e-9));

        let (p_dot, q_dot) = pose_rate(&pose, &BodyVelocity::zero());
        assert_eq!(p_dot, Vector3::zeros());
        assert_eq!(q_dot.coords.norm(), 0.0);
    }

    #[test]
    fn integrate_pose_examples() {
        let pose = Pose::from_euler(Vector3::new(1.0, 2.0, 3.0), 0.1, -0.2, 0.7);
        assert_eq!(integrate_pose(&pose, &BodyVelocity::zero(), 0.37), pose);

        let spin = BodyVelocity::new(Vector3::zeros(), Vector3::new(0.0, 0.0, PI));
        let out = integrate_pose(&Pose::identity(), &spin, 1.0);
        // axis-angle oracle: yaw by π about z
        assert!(close(out.euler().yaw.abs(), PI, 1e-6));

        let heave = BodyVelocity::new(Vector3::z(), Vector3::zeros());
        let out = integrate_pose(&Pose::identity(), &heave, 0.5);
        assert!(vclose(&out.position, &Vector3::new(0.0, 0.0, 0.5), 1e-15));
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        assert_eq!(skew(&Vector3::x()) * Vector3::y(), Vector3::z());
    }

    #[test]
    fn quaternion_norm_survives_a_million_steps() {
        let nu = BodyVelocity::new(Vector3::new(0.3, -0.1, 0.05), Vector3::new(0.7, -1.3, 2.1));
        let mut pose = Pose::identity();
        for _ in 0..1_000_000 {
            pose = integrate_pose(&pose, &nu, 0.02);
        }
        assert!(close(pose.attitude.quaternion().norm(), 1.0, 1e-9));
    }

    #[test]
    fn log_exp_round_trip() {
        let v = Vector3::new(0.3, -0.4, 1.2);
        let q = UnitQuaternion::new_unchecked(exp_map(&v));
        assert!(vclose(&log_map(&q), &v, 1e-12));
        assert!(vclose(
            &log_map(&UnitQuaternion::identity()),
            &Vector3::zeros(),
            0.0
        ));
    }

    #[test]
    fn wrench_resultant_adds_lever_arm() {
        let w = Wrench::body(Vector3::x(), Vector3::zeros(), Vector3::new(0.0, 0.2, 0.0));
        let r = w.resultant();
        assert!(close(r[5], -0.2, 1e-15));
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-range..range, -range..range, -range..range).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn euler_round_trip(roll in angle(), pitch in -1.55f64..1.55, yaw in angle()) {
            let e = quat_to_euler(&euler_to_quat(roll, pitch, yaw));
            prop_assert!(close(e.roll, roll, 1e-9));
            prop_assert!(close(e.pitch, pitch, 1e-9));
            prop_assert!(close(e.yaw, yaw, 1e-9));
        }

        #[test]
        fn quaternion_matches_elementary_rotations(roll in angle(), pitch in angle(), yaw in angle()) {
            let q = euler_to_quat(roll, pitch, yaw);
            let diff = q.to_rotation_matrix().matrix() - zyx_matrix(roll, pitch, yaw);
            prop_assert!(diff.amax() < 1e-12);
            prop_assert!(close(q.quaternion().norm(), 1.0, 1e-12));
        }

        #[test]
        fn skew_is_cross_product(a in vec3(10.0), b in vec3(10.0)) {
            prop_assert!(vclose(&(skew(&a) * b), &a.cross(&b), 1e-12));
            prop_assert_eq!(skew(&a).transpose(), -skew(&a));
        }

        #[test]
        fn pose_rate_is_linear(r in angle(), p in angle(), y in angle(),
                               a in vec3(3.0), b in vec3(3.0), c in vec3(3.0), d in vec3(3.0), k in -3.0f64..3.0) {
            let pose = Pose::from_euler(Vector3::zeros(), r, p, y);
            let n1 = BodyVelocity::new(a, b);
            let n2 = BodyVelocity::new(c, d);
            let sum = BodyVelocity::new(a * k + c, b * k + d);
            let (p1, q1) = pose_rate(&pose, &n1);
            let (p2, q2) = pose_rate(&pose, &n2);
            let (ps, qs) = pose_rate(&pose, &sum);
            prop_assert!(vclose(&ps, &(p1 * k + p2), 1e-12));
            prop_assert!((qs.coords - (q1.coords * k + q2.coords)).amax() < 1e-12);
        }

        #[test]
        fn opposite_spins_cancel(r in angle(), p in -1.5f64..1.5, y in angle(), w in vec3(5.0), dt in 0.001f64..0.5) {
            let pose = Pose::from_euler(Vector3::zeros(), r, p, y);
            let fwd = integrate_pose(&pose, &BodyVelocity::new(Vector3::zeros(), w), dt);
            let back = integrate_pose(&fwd, &BodyVelocity::new(Vector3::zeros(), -w), dt);
            prop_assert!(pose.attitude.angle_to(&back.attitude) < 1e-9);
        }
    }
}
