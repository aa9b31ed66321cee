//! Domain randomization: parameter registry, sampling distributions, presets
//! and progress-driven schedules.
//!
//! A [`DrSpec`] is a set of [`DrParameter`]s. Sampling one produces an
//! [`Overlay`], which [`crate::vehicle::apply_overlay`] and the engine's
//! reset path turn into per-environment physical parameters, current and
//! payload.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DR_SCHEMA_VERSION: u32 = 1;

/// Registry of randomizable parameters.
///
/// Keys with a trailing `*` are ratios to the vehicle's nominal value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DrKey {
    #[serde(rename = "mass*")]
    Mass,
    #[serde(rename = "volume*")]
    Volume,
    /// Scale on the vertical CoB–CoG offset.
    #[serde(rename = "cobm")]
    Cobm,
    #[serde(rename = "inertia*")]
    Inertia,
    #[serde(rename = "added_mass*")]
    AddedMass,
    #[serde(rename = "damping*")]
    Damping,
    /// Current speed, m/s.
    #[serde(rename = "current_velocity")]
    CurrentVelocity,
    /// Current heading in the horizontal plane, rad from north.
    #[serde(rename = "current_direction")]
    CurrentDirection,
    /// Payload mass; as a ratio it is relative to the vehicle's nominal mass.
    #[serde(rename = "payload_mass*")]
    PayloadMass,
    /// Payload attachment point, body frame m.
    #[serde(rename = "payload_position")]
    PayloadPosition,
    #[serde(rename = "time_constant*")]
    TimeConstant,
    #[serde(rename = "thrust_coeff*")]
    ThrustCoeff,
    /// Offset added to every actuator mount, body frame m.
    #[serde(rename = "mount_position_jitter")]
    MountPositionJitter,
}

impl DrKey {
    pub const ALL: [DrKey; 13] = [
        DrKey::Mass,
        DrKey::Volume,
        DrKey::Cobm,
        DrKey::Inertia,
        DrKey::AddedMass,
        DrKey::Damping,
        DrKey::CurrentVelocity,
        DrKey::CurrentDirection,
        DrKey::PayloadMass,
        DrKey::PayloadPosition,
        DrKey::TimeConstant,
        DrKey::ThrustCoeff,
        DrKey::MountPositionJitter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DrKey::Mass => "mass*",
            DrKey::Volume => "volume*",
            DrKey::Cobm => "cobm",
            DrKey::Inertia => "inertia*",
            DrKey::AddedMass => "added_mass*",
            DrKey::Damping => "damping*",
            DrKey::CurrentVelocity => "current_velocity",
            DrKey::CurrentDirection => "current_direction",
            DrKey::PayloadMass => "payload_mass*",
            DrKey::PayloadPosition => "payload_position",
            DrKey::TimeConstant => "time_constant*",
            DrKey::ThrustCoeff => "thrust_coeff*",
            DrKey::MountPositionJitter => "mount_position_jitter",
        }
    }

    /// Vector-valued keys draw three independent components.
    pub fn is_vector(self) -> bool {
        matches!(self, DrKey::PayloadPosition | DrKey::MountPositionJitter)
    }

    /// Keys that belong to the environment rather than the vehicle document.
    pub fn is_environmental(self) -> bool {
        matches!(
            self,
            DrKey::CurrentVelocity
                | DrKey::CurrentDirection
                | DrKey::PayloadMass
                | DrKey::PayloadPosition
        )
    }

    pub fn allows(self, mode: Mode) -> bool {
        match self {
            DrKey::Inertia | DrKey::AddedMass | DrKey::Damping => mode == Mode::Ratio,
            DrKey::Cobm
            | DrKey::CurrentVelocity
            | DrKey::CurrentDirection
            | DrKey::PayloadPosition
            | DrKey::MountPositionJitter => mode == Mode::Absolute,
            DrKey::Mass
            | DrKey::Volume
            | DrKey::PayloadMass
            | DrKey::TimeConstant
            | DrKey::ThrustCoeff => true,
        }
    }

    /// Smallest admissible sample value, with whether it is attainable.
    fn lower_limit(self, mode: Mode) -> Option<(f64, bool)> {
        match (self, mode) {
            (DrKey::PayloadMass, _) | (DrKey::CurrentVelocity, _) | (DrKey::Cobm, _) => {
                Some((0.0, true))
            }
            (_, Mode::Ratio) => Some((0.0, false)),
            (DrKey::Mass | DrKey::TimeConstant, Mode::Absolute) => Some((0.0, false)),
            (DrKey::Volume | DrKey::ThrustCoeff, Mode::Absolute) => Some((0.0, true)),
            _ => None,
        }
    }
}

impl fmt::Display for DrKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DrKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DrKey::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKey(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ratio,
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Normal distribution truncated to `clip`.
    Gaussian {
        mean: f64,
        std: f64,
        clip: [f64; 2],
    },
    /// Piecewise-constant density: `densities[i]` on
    /// `[breakpoints[i], breakpoints[i + 1])`.
    Piecewise {
        breakpoints: Vec<f64>,
        densities: Vec<f64>,
    },
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Distribution::Uniform { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Distribution::Uniform { lo: v, hi: v }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Distribution::Uniform { lo, hi } => {
                if !finite(&[*lo, *hi]) || lo > hi {
                    return Err(Error::invalid(
                        field,
                        format!("uniform bounds need lo <= hi, got [{lo}, {hi}]"),
                    ));
                }
            }
            Distribution::Gaussian { mean, std, clip } => {
                if !finite(&[*mean, *std, clip[0], clip[1]]) || *std < 0.0 {
                    return Err(Error::invalid(
                        field,
                        "gaussian needs finite mean and std >= 0",
                    ));
                }
                if clip[0] > clip[1] {
                    return Err(Error::invalid(field, "gaussian clip needs lo <= hi"));
                }
            }
            Distribution::Piecewise {
                breakpoints,
                densities,
            } => {
                if breakpoints.len() != densities.len() + 1 || densities.is_empty() {
                    return Err(Error::invalid(
                        field,
                        "piecewise needs len(breakpoints) = len(densities) + 1",
                    ));
                }
                if !finite(breakpoints) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid(
                        field,
                        "piecewise breakpoints must increase strictly",
                    ));
                }
                if !finite(densities) || densities.iter().any(|d| *d < 0.0) {
                    return Err(Error::invalid(field, "piecewise densities must be >= 0"));
                }
                if self.piecewise_masses().iter().sum::<f64>() <= 0.0 {
                    return Err(Error::invalid(
                        field,
                        "piecewise density is not normalizable",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Closed interval containing every sample.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Distribution::Uniform { lo, hi } => (*lo, *hi),
            Distribution::Gaussian { clip, .. } => (clip[0], clip[1]),
            Distribution::Piecewise {
                breakpoints,
                densities,
            } => {
                let first = densities.iter().position(|d| *d > 0.0).unwrap_or(0);
                let last = densities
                    .iter()
                    .rposition(|d| *d > 0.0)
                    .unwrap_or(densities.len() - 1);
                (breakpoints[first], breakpoints[last + 1])
            }
        }
    }

    fn piecewise_masses(&self) -> Vec<f64> {
        match self {
            Distribution::Piecewise {
                breakpoints,
                densities,
            } => densities
                .iter()
                .zip(breakpoints.windows(2))
                .map(|(d, w)| d * (w[1] - w[0]))
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + (hi - lo) * u
            }
            Distribution::Gaussian { mean, std, clip } => {
                for _ in 0..64 {
                    let z: f64 = StandardNormal.sample(rng);
                    let x = mean + std * z;
                    if x >= clip[0] && x <= clip[1] {
                        return x;
                    }
                }
                mean.clamp(clip[0], clip[1])
            }
            Distribution::Piecewise { breakpoints, .. } => {
                let masses = self.piecewise_masses();
                let total: f64 = masses.iter().sum();
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut bin = masses.iter().rposition(|m| *m > 0.0).unwrap_or(0);
                for (i, m) in masses.iter().enumerate() {
                    acc += m;
                    if *m > 0.0 && target < acc {
                        bin = i;
                        break;
                    }
                }
                let u: f64 = rng.random();
                breakpoints[bin] + (breakpoints[bin + 1] - breakpoints[bin]) * u
            }
        }
    }

    /// Analytic mean; for the truncated Gaussian this is the untruncated mean
    /// clamped into the clip window.
    pub fn mean(&self) -> f64 {
        match self {
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            Distribution::Gaussian { mean, clip, .. } => mean.clamp(clip[0], clip[1]),
            Distribution::Piecewise { breakpoints, .. } => {
                let masses = self.piecewise_masses();
                let total: f64 = masses.iter().sum();
                masses
                    .iter()
                    .zip(breakpoints.windows(2))
                    .map(|(m, w)| m * 0.5 * (w[0] + w[1]))
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Linear blend of two distributions of the same kind.
    fn lerp(&self, other: &Distribution, t: f64) -> Result<Distribution> {
        let mix = |a: f64, b: f64| a + (b - a) * t;
        Ok(match (self, other) {
            (
                Distribution::Uniform { lo: a0, hi: a1 },
                Distribution::Uniform { lo: b0, hi: b1 },
            ) => Distribution::Uniform {
                lo: mix(*a0, *b0),
                hi: mix(*a1, *b1),
            },
            (
                Distribution::Gaussian {
                    mean: m0,
                    std: s0,
                    clip: c0,
                },
                Distribution::Gaussian {
                    mean: m1,
                    std: s1,
                    clip: c1,
                },
            ) => Distribution::Gaussian {
                mean: mix(*m0, *m1),
                std: mix(*s0, *s1),
                clip: [mix(c0[0], c1[0]), mix(c0[1], c1[1])],
            },
            (
                Distribution::Piecewise {
                    breakpoints: b0,
                    densities: d0,
                },
                Distribution::Piecewise {
                    breakpoints: b1,
                    densities: d1,
                },
            ) if d0.len() == d1.len() => Distribution::Piecewise {
                breakpoints: b0.iter().zip(b1).map(|(a, b)| mix(*a, *b)).collect(),
                densities: d0.iter().zip(d1).map(|(a, b)| mix(*a, *b)).collect(),
            },
            _ => {
                return Err(Error::invalid(
                    "schedule",
                    "keyframes must share distribution kind and shape",
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrParameter {
    pub key: DrKey,
    pub mode: Mode,
    pub distribution: Distribution,
}

impl DrParameter {
    pub fn new(key: DrKey, mode: Mode, distribution: Distribution) -> Self {
        Self {
            key,
            mode,
            distribution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = format!("parameter[{}]", self.key);
        if !self.key.allows(self.mode) {
            return Err(Error::invalid(
                &field,
                format!("mode {:?} not supported for this key", self.mode),
            ));
        }
        self.distribution.validate(&field)?;
        if let Some((limit, inclusive)) = self.key.lower_limit(self.mode) {
            let (lo, _) = self.distribution.support();
            if lo < limit || (!inclusive && lo <= limit) {
                let op = if inclusive { ">=" } else { ">" };
                return Err(Error::invalid(
                    &field,
                    format!("support must be {op} {limit}, got lower bound {lo}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleValue {
    Scalar(f64),
    Vector([f64; 3]),
}

impl SampleValue {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            SampleValue::Scalar(v) => Some(*v),
            SampleValue::Vector(_) => None,
        }
    }

    pub fn vector(&self) -> Option<Vector3<f64>> {
        match self {
            SampleValue::Vector(v) => Some(Vector3::from(*v)),
            SampleValue::Scalar(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub mode: Mode,
    pub value: SampleValue,
}

impl Sample {
    pub fn ratio(v: f64) -> Self {
        Self {
            mode: Mode::Ratio,
            value: SampleValue::Scalar(v),
        }
    }

    pub fn absolute(v: f64) -> Self {
        Self {
            mode: Mode::Absolute,
            value: SampleValue::Scalar(v),
        }
    }

    pub fn absolute_vector(v: Vector3<f64>) -> Self {
        Self {
            mode: Mode::Absolute,
            value: SampleValue::Vector([v.x, v.y, v.z]),
        }
    }
}

/// One draw of a [`DrSpec`].
pub type Overlay = BTreeMap<DrKey, Sample>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DrSpec {
    #[serde(default = "dr_schema_version")]
    pub schema_version: u32,
    #[serde(rename = "parameter", default)]
    pub parameters: Vec<DrParameter>,
}

fn dr_schema_version() -> u32 {
    DR_SCHEMA_VERSION
}

impl DrSpec {
    pub fn new(parameters: Vec<DrParameter>) -> Result<Self> {
        let spec = Self {
            schema_version: DR_SCHEMA_VERSION,
            parameters,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn empty() -> Self {
        Self {
            schema_version: DR_SCHEMA_VERSION,
            parameters: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != DR_SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {DR_SCHEMA_VERSION}"),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.parameters {
            if !seen.insert(p.key) {
                return Err(Error::invalid(
                    format!("parameter[{}]", p.key),
                    "duplicate key",
                ));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: DrSpec =
            toml::from_str(text).map_err(|e| Error::parse("randomization spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("randomization spec serializes")
    }

    pub fn get(&self, key: DrKey) -> Option<&DrParameter> {
        self.parameters.iter().find(|p| p.key == key)
    }

    /// Named preset: `train`, `test_env1` or `test_env2`.
    pub fn preset(name: &str) -> Result<Self> {
        Preset::from_str(name).map(Preset::spec)
    }

    pub fn without(&self, keys: &[DrKey]) -> Self {
        Self {
            schema_version: self.schema_version,
            parameters: self
                .parameters
                .iter()
                .filter(|p| !keys.contains(&p.key))
                .cloned()
                .collect(),
        }
    }
}

/// Shipped randomization settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Training ranges.
    Train,
    /// Point values inside the training ranges.
    TestEnv1,
    /// Point values outside the training ranges.
    TestEnv2,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Preset::Train),
            "test_env1" | "env1" => Ok(Preset::TestEnv1),
            "test_env2" | "env2" => Ok(Preset::TestEnv2),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset `{other}`"),
            )),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Train => "train",
            Preset::TestEnv1 => "test_env1",
            Preset::TestEnv2 => "test_env2",
        }
    }

    /// The preset's rows as `(key, mode, train range, env1 value, env2 value)`.
    pub const TABLE: [(DrKey, Mode, [f64; 2], f64, f64); 8] = [
        (DrKey::Mass, Mode::Ratio, [0.8, 1.2], 1.1, 1.4),
        (DrKey::Volume, Mode::Ratio, [0.8, 1.2], 1.1, 1.4),
        (DrKey::Cobm, Mode::Absolute, [0.5, 3.0], 2.0, 4.0),
        (DrKey::Inertia, Mode::Ratio, [0.8, 1.2], 1.1, 1.4),
        (DrKey::AddedMass, Mode::Ratio, [0.8, 1.2], 1.1, 1.4),
        (DrKey::Damping, Mode::Ratio, [0.8, 1.2], 1.1, 1.4),
        (DrKey::CurrentVelocity, Mode::Absolute, [0.0, 0.5], 0.2, 0.8),
        (DrKey::PayloadMass, Mode::Ratio, [0.0, 0.3], 0.2, 0.4),
    ];

    pub fn spec(self) -> DrSpec {
        let parameters = Self::TABLE
            .iter()
            .map(|&(key, mode, range, env1, env2)| {
                let distribution = match self {
                    Preset::Train => Distribution::uniform(range[0], range[1]),
                    Preset::TestEnv1 => Distribution::point(env1),
                    Preset::TestEnv2 => Distribution::point(env2),
                };
                DrParameter::new(key, mode, distribution)
            })
            .collect();
        DrSpec {
            schema_version: DR_SCHEMA_VERSION,
            parameters,
        }
    }
}

/// Draws one value per parameter, in declaration order.
pub fn sample_overlay<R: Rng + ?Sized>(spec: &DrSpec, rng: &mut R) -> Overlay {
    spec.parameters
        .iter()
        .map(|p| {
            let value = if p.key.is_vector() {
                let x = p.distribution.sample(rng);
                let y = p.distribution.sample(rng);
                let z = p.distribution.sample(rng);
                SampleValue::Vector([x, y, z])
            } else {
                SampleValue::Scalar(p.distribution.sample(rng))
            };
            (
                p.key,
                Sample {
                    mode: p.mode,
                    value,
                },
            )
        })
        .collect()
}

/// NED current implied by an overlay. A missing direction is drawn uniformly
/// on the horizontal circle; the vertical component is always zero.
pub fn current_from_overlay<R: Rng + ?Sized>(overlay: &Overlay, rng: &mut R) -> Vector3<f64> {
    let speed = overlay
        .get(&DrKey::CurrentVelocity)
        .and_then(|s| s.value.scalar())
        .unwrap_or(0.0);
    if speed == 0.0 {
        return Vector3::zeros();
    }
    let heading = match overlay
        .get(&DrKey::CurrentDirection)
        .and_then(|s| s.value.scalar())
    {
        Some(h) => h,
        None => rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    };
    let (s, c) = heading.sin_cos();
    Vector3::new(speed * c, speed * s, 0.0)
}

/// Draws a current vector from the current-related parameters of `spec`.
pub fn sample_current<R: Rng + ?Sized>(spec: &DrSpec, rng: &mut R) -> Vector3<f64> {
    let only_current = DrSpec {
        schema_version: spec.schema_version,
        parameters: spec
            .parameters
            .iter()
            .filter(|p| matches!(p.key, DrKey::CurrentVelocity | DrKey::CurrentDirection))
            .cloned()
            .collect(),
    };
    let overlay = sample_overlay(&only_current, rng);
    current_from_overlay(&overlay, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub progress: f64,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub key: DrKey,
    pub mode: Mode,
    pub keyframes: Vec<Keyframe>,
}

/// Distribution bounds that evolve piecewise-linearly with training progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrSchedule {
    #[serde(rename = "entry")]
    pub entries: Vec<ScheduleEntry>,
}

impl DrSchedule {
    pub fn new(entries: Vec<ScheduleEntry>) -> Result<Self> {
        let schedule = Self { entries };
        schedule.validate()?;
        Ok(schedule)
    }

    /// Blends from `start` at progress 0 to `end` at progress 1. Both specs
    /// must list the same keys in the same order.
    pub fn linear(start: &DrSpec, end: &DrSpec) -> Result<Self> {
        if start.parameters.len() != end.parameters.len() {
            return Err(Error::invalid(
                "schedule",
                "start and end specs differ in length",
            ));
        }
        let entries = start
            .parameters
            .iter()
            .zip(&end.parameters)
            .map(|(a, b)| {
                if a.key != b.key || a.mode != b.mode {
                    return Err(Error::invalid(
                        "schedule",
                        format!("key mismatch: {} vs {}", a.key, b.key),
                    ));
                }
                Ok(ScheduleEntry {
                    key: a.key,
                    mode: a.mode,
                    keyframes: vec![
                        Keyframe {
                            progress: 0.0,
                            distribution: a.distribution.clone(),
                        },
                        Keyframe {
                            progress: 1.0,
                            distribution: b.distribution.clone(),
                        },
                    ],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            let field = format!("schedule[{}]", e.key);
            if e.keyframes.is_empty() {
                return Err(Error::invalid(&field, "needs at least one keyframe"));
            }
            if e.keyframes
                .windows(2)
                .any(|w| w[0].progress >= w[1].progress)
            {
                return Err(Error::invalid(
                    &field,
                    "keyframe progress must increase strictly",
                ));
            }
            if e.keyframes
                .iter()
                .any(|k| !(0.0..=1.0).contains(&k.progress))
            {
                return Err(Error::invalid(
                    &field,
                    "keyframe progress must lie in [0, 1]",
                ));
            }
            for k in &e.keyframes {
                DrParameter::new(e.key, e.mode, k.distribution.clone()).validate()?;
            }
            for w in e.keyframes.windows(2) {
                w[0].distribution.lerp(&w[1].distribution, 0.5)?;
            }
        }
        Ok(())
    }

    /// Active spec at `progress ∈ [0, 1]`.
    pub fn set_progress(&self, progress: f64) -> Result<DrSpec> {
        if !(0.0..=1.0).contains(&progress) {
            return Err(Error::OutOfRange(format!(
                "progress must lie in [0, 1], got {progress}"
            )));
        }
        let parameters = self
            .entries
            .iter()
            .map(|e| {
                let frames = &e.keyframes;
                let distribution = if progress <= frames[0].progress {
                    frames[0].distribution.clone()
                } else if progress >= frames[frames.len() - 1].progress {
                    frames[frames.len() - 1].distribution.clone()
                } else {
                    let i = frames
                        .windows(2)
                        .position(|w| progress <= w[1].progress)
                        .unwrap();
                    let (a, b) = (&frames[i], &frames[i + 1]);
                    let t = (progress - a.progress) / (b.progress - a.progress);
                    a.distribution.lerp(&b.distribution, t)?
                };
                Ok(DrParameter::new(e.key, e.mode, distribution))
            })
            .collect::<Result<Vec<_>>>()?;
        DrSpec::new(parameters)
    }
}

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub key: DrKey,
    pub samples: usize,
    pub support: [f64; 2],
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub expected_mean: f64,
    /// Counts over [`HISTOGRAM_BINS`] equal bins spanning the support.
    pub histogram: Vec<u64>,
    pub within_support: bool,
}

/// Draws `n_samples` fresh values per parameter and summarizes them.
pub fn empirical_check<R: Rng + ?Sized>(
    spec: &DrSpec,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<ParamSummary>> {
    if n_samples == 0 {
        return Err(Error::OutOfRange(
            "empirical check needs at least one sample".into(),
        ));
    }
    spec.validate()?;
    Ok(spec
        .parameters
        .iter()
        .map(|p| {
            let (lo, hi) = p.distribution.support();
            let mut hist = vec![0u64; HISTOGRAM_BINS];
            let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for _ in 0..n_samples {
                let x = p.distribution.sample(rng);
                min = min.min(x);
                max = max.max(x);
                sum += x;
                let bin = if hi > lo {
                    (((x - lo) / (hi - lo)) * HISTOGRAM_BINS as f64)
                        .floor()
                        .clamp(0.0, (HISTOGRAM_BINS - 1) as f64) as usize
                } else {
                    0
                };
                hist[bin] += 1;
            }
            ParamSummary {
                key: p.key,
                samples: n_samples,
                support: [lo, hi],
                min,
                max,
                mean: sum / n_samples as f64,
                expected_mean: p.distribution.mean(),
                histogram: hist,
                within_support: min >= lo && max <= hi,
            }
        })
        .collect())
}
