//! Time-parameterized reference paths for the tracking task.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectoryShape {
    /// `p(t) = (R·cos ωt, R·sin ωt, z0 + c·t)`.
    Helix {
        radius_m: f64,
        angular_rate_rad_s: f64,
        z0_m: f64,
        /// Positive values descend (NED).
        climb_rate_m_s: f64,
    },
    /// `p(t) = (A·sin at, B·sin(bt + δ), z0 + C·sin ct)`.
    Lissajous {
        amplitude_m: [f64; 3],
        rate_rad_s: [f64; 3],
        phase_rad: f64,
        z0_m: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub shape: TrajectoryShape,
    pub duration_s: f64,
}

impl TrajectorySpec {
    pub fn helix(
        radius_m: f64,
        angular_rate_rad_s: f64,
        z0_m: f64,
        climb_rate_m_s: f64,
        duration_s: f64,
    ) -> Self {
        Self {
            shape: TrajectoryShape::Helix {
                radius_m,
                angular_rate_rad_s,
                z0_m,
                climb_rate_m_s,
            },
            duration_s,
        }
    }

    pub fn lissajous(
        amplitude_m: [f64; 3],
        rate_rad_s: [f64; 3],
        phase_rad: f64,
        z0_m: f64,
        duration_s: f64,
    ) -> Self {
        Self {
            shape: TrajectoryShape::Lissajous {
                amplitude_m,
                rate_rad_s,
                phase_rad,
                z0_m,
            },
            duration_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::invalid("trajectory.duration_s", "must be > 0"));
        }
        let finite = match &self.shape {
            TrajectoryShape::Helix {
                radius_m,
                angular_rate_rad_s,
                z0_m,
                climb_rate_m_s,
            } => [*radius_m, *angular_rate_rad_s, *z0_m, *climb_rate_m_s]
                .iter()
                .all(|x| x.is_finite()),
            TrajectoryShape::Lissajous {
                amplitude_m,
                rate_rad_s,
                phase_rad,
                z0_m,
            } => amplitude_m
                .iter()
                .chain(rate_rad_s)
                .chain([phase_rad, z0_m])
                .all(|x| x.is_finite()),
        };
        if !finite {
            return Err(Error::invalid("trajectory.shape", "non-finite parameter"));
        }
        Ok(())
    }
}

/// Reference position and velocity (NED) at time `t`.
pub fn reference_point(spec: &TrajectorySpec, t: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    if !(t >= 0.0 && t <= spec.duration_s * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange(format!(
            "t = {t} outside [0, {}]",
            spec.duration_s
        )));
    }
    Ok(match &spec.shape {
        TrajectoryShape::Helix {
            radius_m: r,
            angular_rate_rad_s: w,
            z0_m,
            climb_rate_m_s: c,
        } => {
            let (s, co) = (w * t).sin_cos();
            (
                Vector3::new(r * co, r * s, z0_m + c * t),
                Vector3::new(-r * w * s, r * w * co, *c),
            )
        }
        TrajectoryShape::Lissajous {
            amplitude_m: amp,
            rate_rad_s: rate,
            phase_rad,
            z0_m,
        } => {
            let px = rate[0] * t;
            let py = rate[1] * t + phase_rad;
            let pz = rate[2] * t;
            (
                Vector3::new(
                    amp[0] * px.sin(),
                    amp[1] * py.sin(),
                    z0_m + amp[2] * pz.sin(),
                ),
                Vector3::new(
                    amp[0] * rate[0] * px.cos(),
                    amp[1] * rate[1] * py.cos(),
                    amp[2] * rate[2] * pz.cos(),
                ),
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helix_start() {
        let spec = TrajectorySpec::helix(2.0, 0.5, 3.0, 0.1, 10.0);
        let (p, v) = reference_point(&spec, 0.0).unwrap();
        assert_eq!(p, Vector3::new(2.0, 0.0, 3.0));
        assert_eq!(v, Vector3::new(0.0, 1.0, 0.1));
    }

    #[test]
    fn lissajous_start() {
        let spec = TrajectorySpec::lissajous([1.0, 2.0, 0.5], [0.3, 0.2, 0.1], 0.0, 4.0, 10.0);
        let (p, _) = reference_point(&spec, 0.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 4.0));
    }

    #[test]
    fn out_of_range() {
        let spec = TrajectorySpec::helix(2.0, 0.5, 3.0, 0.1, 10.0);
        assert!(reference_point(&spec, -0.1).is_err());
        assert!(reference_point(&spec, 10.5).is_err());
        assert!(reference_point(&spec, 10.0).is_ok());
        assert!(reference_point(&spec, f64::NAN).is_err());
    }

    #[test]
    fn central_difference_matches_velocity() {
        let specs = [
            TrajectorySpec::helix(2.0, 0.4, 5.0, 0.05, 30.0),
            TrajectorySpec::lissajous([2.0, 1.5, 0.5], [0.3, 0.5, 0.2], 0.7, 5.0, 30.0),
        ];
        for spec in &specs {
            for k in 1..29 {
                let t = k as f64;
                let mut errs = Vec::new();
                for h in [1e-2, 5e-3] {
                    let (p1, _) = reference_point(spec, t + h).unwrap();
                    let (p0, _) = reference_point(spec, t - h).unwrap();
                    let (_, v) = reference_point(spec, t).unwrap();
                    errs.push(((p1 - p0) / (2.0 * h) - v).norm());
                }
                assert!(errs[0] < 1e-4);
                // second-order: halving h quarters the error
                assert!(errs[1] < errs[0] * 0.3 + 1e-12);
            }
        }
    }
}
