//! Rigid-body and hydrodynamic terms of the 6-DOF marine-craft equation of
//! motion
//!
//! ```text
//! (M_RB + M_A) ν̇ + C_RB(ν) ν + C_A(ν_r) ν_r + D(ν_r) ν_r + g(η) = τ
//! ```
//!
//! with `ν_r = ν − ν_c` the velocity relative to a steady, irrotational
//! current. Everything is expressed in the body frame about the body origin.
//! The added-mass acceleration term is not applied as a force; it is folded
//! into the composite mass matrix that [`acceleration`] solves against.

use nalgebra::{Cholesky, Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6, U6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{skew, Pose};
use crate::serde_util;

pub const STANDARD_GRAVITY: f64 = 9.81;
pub const SEAWATER_DENSITY: f64 = 1025.0;

/// Relative tolerance used for symmetry checks on loaded matrices.
const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidBodyParams {
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    /// Inertia tensor about the centre of gravity.
    #[serde(rename = "inertia_kg_m2", with = "serde_util::mat3")]
    pub inertia: Matrix3<f64>,
    /// Centre of gravity, body frame.
    #[serde(rename = "cog_m", with = "serde_util::vec3")]
    pub cog: Vector3<f64>,
    /// Centre of buoyancy, body frame.
    #[serde(rename = "cob_m", with = "serde_util::vec3")]
    pub cob: Vector3<f64>,
    #[serde(rename = "displaced_volume_m3")]
    pub volume: f64,
}

impl RigidBodyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid(
                "rigid_body.mass_kg",
                format!("must be > 0, got {}", self.mass),
            ));
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(Error::invalid(
                "rigid_body.displaced_volume_m3",
                format!("must be >= 0, got {}", self.volume),
            ));
        }
        for (name, v) in [
            ("rigid_body.cog_m", &self.cog),
            ("rigid_body.cob_m", &self.cob),
        ] {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::invalid(name, "non-finite component"));
            }
        }
        if !is_symmetric3(&self.inertia) {
            return Err(Error::invalid("rigid_body.inertia_kg_m2", "not symmetric"));
        }
        if Cholesky::new(self.inertia).is_none() {
            return Err(Error::NotPositiveDefinite(
                "rigid_body.inertia_kg_m2".into(),
            ));
        }
        Ok(())
    }

    pub fn weight(&self, gravity: f64) -> f64 {
        self.mass * gravity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroCoeffs {
    #[serde(with = "serde_util::mat6")]
    pub added_mass: Matrix6<f64>,
    #[serde(with = "serde_util::mat6")]
    pub linear_damping: Matrix6<f64>,
    #[serde(with = "serde_util::mat6")]
    pub quadratic_damping: Matrix6<f64>,
    #[serde(rename = "fluid_density_kg_m3", default = "default_density")]
    pub fluid_density: f64,
    #[serde(rename = "gravity_m_s2", default = "default_gravity")]
    pub gravity: f64,
}

fn default_density() -> f64 {
    SEAWATER_DENSITY
}

fn default_gravity() -> f64 {
    STANDARD_GRAVITY
}

impl HydroCoeffs {
    pub fn validate(&self) -> Result<()> {
        if !(self.fluid_density.is_finite() && self.fluid_density >= 0.0) {
            return Err(Error::invalid(
                "hydrodynamics.fluid_density_kg_m3",
                "must be >= 0",
            ));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return Err(Error::invalid("hydrodynamics.gravity_m_s2", "must be >= 0"));
        }
        if !is_symmetric6(&self.added_mass) {
            return Err(Error::invalid("hydrodynamics.added_mass", "not symmetric"));
        }
        check_psd(&self.added_mass, "hydrodynamics.added_mass")?;
        // D_lin only needs a PSD symmetric part to be dissipative.
        check_psd(
            &(0.5 * (self.linear_damping + self.linear_damping.transpose())),
            "hydrodynamics.linear_damping",
        )?;
        let dq = &self.quadratic_damping;
        if (0..6).any(|i| dq[(i, i)] < 0.0) {
            return Err(Error::invalid(
                "hydrodynamics.quadratic_damping",
                "negative diagonal entry",
            ));
        }
        check_psd(
            &(0.5 * (dq + dq.transpose())),
            "hydrodynamics.quadratic_damping",
        )?;
        Ok(())
    }

    pub fn buoyancy(&self, rb: &RigidBodyParams) -> f64 {
        self.fluid_density * self.gravity * rb.volume
    }
}

fn is_symmetric3(m: &Matrix3<f64>) -> bool {
    let scale = m.amax().max(1.0);
    m.iter().all(|v| v.is_finite()) && (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

fn is_symmetric6(m: &Matrix6<f64>) -> bool {
    let scale = m.amax().max(1.0);
    m.iter().all(|v| v.is_finite()) && (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

fn check_psd(m: &Matrix6<f64>, field: &str) -> Result<()> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid(field, "non-finite entry"));
    }
    let eig = SymmetricEigen::new(*m);
    let tol = 1e-12 * m.amax().max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -tol) {
        return Err(Error::invalid(field, "not positive semi-definite"));
    }
    Ok(())
}

/// Composite `M_RB + M_A` with its Cholesky factor cached.
#[derive(Debug, Clone)]
pub struct MassMatrix {
    matrix: Matrix6<f64>,
    factor: Cholesky<f64, U6>,
}

impl MassMatrix {
    pub fn new(matrix: Matrix6<f64>) -> Result<Self> {
        if !is_symmetric6(&matrix) {
            return Err(Error::invalid("mass_matrix", "not symmetric"));
        }
        let factor = Cholesky::new(matrix)
            .ok_or_else(|| Error::NotPositiveDefinite("mass_matrix".into()))?;
        Ok(Self { matrix, factor })
    }

    pub fn from_parts(rb: &RigidBodyParams, coeffs: &HydroCoeffs) -> Result<Self> {
        Self::new(rb_mass_matrix(rb)? + coeffs.added_mass)
    }

    pub fn matrix(&self) -> &Matrix6<f64> {
        &self.matrix
    }

    pub fn kinetic_energy(&self, nu: &Vector6<f64>) -> f64 {
        0.5 * nu.dot(&(self.matrix * nu))
    }
}

/// Rigid-body mass matrix about the body origin for a CoG offset `r_g`:
///
/// ```text
/// [[ m·I₃,        −m·S(r_g)               ],
///  [ m·S(r_g),    I_cg − m·S(r_g)·S(r_g)  ]]
/// ```
pub fn rb_mass_matrix(rb: &RigidBodyParams) -> Result<Matrix6<f64>> {
    if Cholesky::new(rb.inertia).is_none() || !is_symmetric3(&rb.inertia) {
        return Err(Error::NotPositiveDefinite(
            "rigid_body.inertia_kg_m2".into(),
        ));
    }
    let m = rb.mass;
    let s = skew(&rb.cog);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(Matrix3::identity() * m));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-m * s));
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(m * s));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(rb.inertia - m * s * s));
    Ok(out)
}

#[inline]
fn split(nu: &Vector6<f64>) -> (Vector3<f64>, Vector3<f64>) {
    (
        Vector3::new(nu[0], nu[1], nu[2]),
        Vector3::new(nu[3], nu[4], nu[5]),
    )
}

/// Block momenta `(M₁₁ν₁ + M₁₂ν₂, M₂₁ν₁ + M₂₂ν₂)`.
#[inline]
fn block_momenta(m: &Matrix6<f64>, nu: &Vector6<f64>) -> (Vector3<f64>, Vector3<f64>) {
    split(&(m * nu))
}

/// Coriolis–centripetal matrix of a symmetric mass matrix `M`:
///
/// ```text
/// C(ν) = [[ 0,        −S(a) ],
///         [ −S(a),    −S(b) ]],   a = M₁₁ν₁ + M₁₂ν₂,  b = M₂₁ν₁ + M₂₂ν₂
/// ```
pub fn coriolis(m: &Matrix6<f64>, nu: &Vector6<f64>) -> Matrix6<f64> {
    let (a, b) = block_momenta(m, nu);
    let sa = skew(&a);
    let sb = skew(&b);
    let mut c = Matrix6::zeros();
    c.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-sa));
    c.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-sa));
    c.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-sb));
    c
}

/// `C(ν)·ν` evaluated with cross products instead of forming the matrix.
#[inline]
pub fn coriolis_force(m: &Matrix6<f64>, nu: &Vector6<f64>) -> Vector6<f64> {
    let (a, b) = block_momenta(m, nu);
    let (v, w) = split(nu);
    let top = w.cross(&a);
    let bottom = v.cross(&a) + w.cross(&b);
    Vector6::new(top.x, top.y, top.z, bottom.x, bottom.y, bottom.z)
}

/// `D(ν_r)·ν_r` with `D(ν_r)_ij = D_lin,ij + D_quad,ij·|ν_r,j|`.
#[inline]
pub fn damping_force(coeffs: &HydroCoeffs, nu_r: &Vector6<f64>) -> Vector6<f64> {
    let abs_scaled = nu_r.map(|x| x.abs() * x);
    coeffs.linear_damping * nu_r + coeffs.quadratic_damping * abs_scaled
}

/// Restoring vector `g(η)` from weight at the CoG and buoyancy at the CoB.
///
/// This is the left-hand-side term of the equation of motion: it is
/// subtracted when forming the right-hand side, so the physical force on the
/// vehicle is `−g(η)`.
pub fn restoring(pose: &Pose, rb: &RigidBodyParams, coeffs: &HydroCoeffs) -> Vector6<f64> {
    let weight = rb.weight(coeffs.gravity);
    let buoyancy = coeffs.buoyancy(rb);
    let down_body = pose.attitude.inverse_transform_vector(&Vector3::z());
    let f_w = down_body * weight;
    let f_b = down_body * -buoyancy;
    let force = f_w + f_b;
    let torque = rb.cog.cross(&f_w) + rb.cob.cross(&f_b);
    -Vector6::new(force.x, force.y, force.z, torque.x, torque.y, torque.z)
}

/// Non-actuator hydrodynamic wrench with current-relative velocity:
/// `−C_A(ν_r)ν_r − D(ν_r)ν_r − g(η)`, where `ν_r = ν − ν_c`.
///
/// The rigid-body Coriolis term is excluded; it acts on `ν`, not `ν_r`.
pub fn hydro_wrench(
    pose: &Pose,
    nu: &Vector6<f64>,
    nu_c: &Vector6<f64>,
    rb: &RigidBodyParams,
    coeffs: &HydroCoeffs,
) -> Vector6<f64> {
    let nu_r = nu - nu_c;
    -coriolis_force(&coeffs.added_mass, &nu_r)
        - damping_force(coeffs, &nu_r)
        - restoring(pose, rb, coeffs)
}

/// Solves `M·ν̇ = rhs` with the cached factorization.
#[inline]
pub fn acceleration(m: &MassMatrix, rhs: &Vector6<f64>) -> Vector6<f64> {
    m.factor.solve(rhs)
}
