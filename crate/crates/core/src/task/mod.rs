//! Benchmark tasks over a batched simulator: station-keeping, trajectory
//! tracking and docking.
//!
//! # Observation layout
//!
//! Each env's observation row is, in order:
//!
//! | slice | content |
//! |---|---|
//! | `0..3` | position error `target − p`, body frame (m) |
//! | `3..6` | attitude error, body-frame rotation vector taking the current attitude to the target (rad) |
//! | `6..12` | body velocity `ν` |
//! | `12..12+A` | previous (clamped) commands |
//! | tracking: `+3` | reference velocity, body frame (m/s) |
//! | docking: `+1` | height of the contact point above the platform (m) |
//!
//! An episode that leaves the workspace or diverges is charged
//! [`TaskConfig::exit_cost`] on its last step.
//!
//! # Auto-reset
//!
//! When a row terminates or truncates, [`VecEnv::step`] resets it at once and
//! returns the first observation of the new episode in that row. The final
//! observation of the finished episode and its metric are in
//! [`StepInfo::episode`].

pub mod reward;
pub mod trajectory;

use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dr::{
    current_from_overlay, sample_overlay, Distribution, DrKey, DrParameter, DrSpec, Mode, Preset,
};
use crate::engine::{BatchSim, ResetDraw, ResetSampler, RngKey, SimConfig};
use crate::error::{Error, Result};
use crate::kinematics::{attitude_error, euler_to_quat, Pose};
use crate::serde_util;
use crate::vehicle::load_vehicle;

pub use reward::{
    docking_terminal_reward, reward_station_keeping, reward_tracking, step_docking, tilt_angle,
    Contact, DockSpec, DockingWeights, StationWeights, TrackingWeights,
};
pub use trajectory::{reference_point, TrajectoryShape, TrajectorySpec};

pub const TASK_SCHEMA_VERSION: u32 = 1;
/// Observation entries before the command block.
pub const BASE_OBS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    StationKeeping,
    Tracking,
    Docking,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::StationKeeping,
        TaskKind::Tracking,
        TaskKind::Docking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::StationKeeping => "station_keeping",
            TaskKind::Tracking => "tracking",
            TaskKind::Docking => "docking",
        }
    }

    pub fn extra_obs(self) -> usize {
        match self {
            TaskKind::StationKeeping => 0,
            TaskKind::Tracking => 3,
            TaskKind::Docking => 1,
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "station_keeping" | "station-keeping" => Ok(TaskKind::StationKeeping),
            "tracking" => Ok(TaskKind::Tracking),
            "docking" => Ok(TaskKind::Docking),
            other => Err(Error::invalid("task", format!("unknown task `{other}`"))),
        }
    }
}

/// Disturbance level of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// No current, no payload, nominal parameters.
    #[default]
    Standard,
    /// Fixed 0.2 m/s current in a random direction and a payload of 0.2×
    /// the vehicle mass.
    Disturbed,
    /// Training-range randomization of every parameter, current and payload.
    DisturbedDr,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Standard => "standard",
            Level::Disturbed => "disturbed",
            Level::DisturbedDr => "disturbed_dr",
        }
    }

    pub fn dr_spec(self) -> DrSpec {
        match self {
            Level::Standard => DrSpec::empty(),
            Level::Disturbed => DrSpec {
                schema_version: crate::dr::DR_SCHEMA_VERSION,
                parameters: vec![
                    DrParameter::new(
                        DrKey::CurrentVelocity,
                        Mode::Absolute,
                        Distribution::point(0.2),
                    ),
                    DrParameter::new(DrKey::PayloadMass, Mode::Ratio, Distribution::point(0.2)),
                ],
            },
            Level::DisturbedDr => Preset::Train.spec(),
        }
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Level::Standard),
            "disturbed" => Ok(Level::Disturbed),
            "disturbed_dr" => Ok(Level::DisturbedDr),
            other => Err(Error::invalid("level", format!("unknown level `{other}`"))),
        }
    }
}

/// Initial-state spread around the task's start point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSpec {
    /// Half-width of the uniform horizontal offset, m.
    pub position_spread_m: f64,
    /// Half-width of the uniform vertical offset, m.
    pub depth_spread_m: f64,
    pub yaw_spread_rad: f64,
    /// Half-width of the uniform roll and pitch offsets.
    pub tilt_spread_rad: f64,
    /// Half-width of the uniform initial linear velocity, m/s per axis.
    pub velocity_spread_m_s: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            position_spread_m: 1.0,
            depth_spread_m: 1.0,
            yaw_spread_rad: 0.5,
            tilt_spread_rad: 0.1,
            velocity_spread_m_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    StationKeeping {
        #[serde(with = "serde_util::vec3")]
        target_m: Vector3<f64>,
        #[serde(default)]
        target_yaw_rad: f64,
        #[serde(default)]
        weights: StationWeights,
    },
    Tracking {
        trajectory: TrajectorySpec,
        /// Mean deviation below which an episode counts as a success.
        tolerance_m: f64,
        #[serde(default)]
        weights: TrackingWeights,
    },
    Docking {
        dock: DockSpec,
        /// Start height of the contact point above the platform.
        start_height_m: f64,
        #[serde(default)]
        weights: DockingWeights,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSpec::StationKeeping { .. } => TaskKind::StationKeeping,
            TaskSpec::Tracking { .. } => TaskKind::Tracking,
            TaskSpec::Docking { .. } => TaskKind::Docking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    #[serde(default = "task_schema_version")]
    pub schema_version: u32,
    pub vehicle: String,
    #[serde(default)]
    pub level: Level,
    pub episode_steps: u64,
    /// Episodes terminate when the vehicle strays this far from the task
    /// anchor (target, reference point or dock centre).
    pub bounds_m: f64,
    #[serde(default)]
    pub init: InitSpec,
    pub task: TaskSpec,
}

fn task_schema_version() -> u32 {
    TASK_SCHEMA_VERSION
}

impl TaskConfig {
    /// Documented defaults for each task.
    pub fn new(kind: TaskKind, vehicle: &str, level: Level) -> Self {
        let (episode_steps, bounds_m, init, task) = match kind {
            TaskKind::StationKeeping => (
                500,
                5.0,
                InitSpec::default(),
                TaskSpec::StationKeeping {
                    target_m: Vector3::new(0.0, 0.0, 5.0),
                    target_yaw_rad: 0.0,
                    weights: StationWeights::default(),
                },
            ),
            TaskKind::Tracking => (
                1000,
                5.0,
                InitSpec {
                    position_spread_m: 0.3,
                    depth_spread_m: 0.3,
                    yaw_spread_rad: 0.3,
                    tilt_spread_rad: 0.05,
                    velocity_spread_m_s: 0.0,
                },
                TaskSpec::Tracking {
                    trajectory: TrajectorySpec::helix(2.0, 0.1, 5.0, 0.02, 20.0),
                    tolerance_m: 0.5,
                    weights: TrackingWeights::default(),
                },
            ),
            TaskKind::Docking => (
                750,
                6.0,
                InitSpec {
                    position_spread_m: 1.0,
                    depth_spread_m: 0.25,
                    yaw_spread_rad: 0.5,
                    tilt_spread_rad: 0.1,
                    velocity_spread_m_s: 0.0,
                },
                TaskSpec::Docking {
                    dock: DockSpec {
                        centre: Vector3::new(0.0, 0.0, 6.0),
                        capture_radius_m: 0.5,
                        contact_height_m: 0.0,
                    },
                    start_height_m: 2.0,
                    weights: DockingWeights::default(),
                },
            ),
        };
        Self {
            schema_version: TASK_SCHEMA_VERSION,
            vehicle: vehicle.to_string(),
            level,
            episode_steps,
            bounds_m,
            init,
            task,
        }
    }

    pub fn kind(&self) -> TaskKind {
        self.task.kind()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TaskConfig = toml::from_str(text).map_err(|e| Error::parse("task config", e))?;
        cfg.validate(None)?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("task config serializes")
    }

    /// Checks field ranges; with `dt` also checks that a tracking episode fits
    /// inside its trajectory.
    pub fn validate(&self, dt: Option<f64>) -> Result<()> {
        if self.schema_version != TASK_SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {TASK_SCHEMA_VERSION}"),
            ));
        }
        if self.episode_steps == 0 {
            return Err(Error::invalid("episode_steps", "must be >= 1"));
        }
        if !(self.bounds_m.is_finite() && self.bounds_m > 0.0) {
            return Err(Error::invalid("bounds_m", "must be > 0"));
        }
        let i = &self.init;
        for (name, v) in [
            ("init.position_spread_m", i.position_spread_m),
            ("init.depth_spread_m", i.depth_spread_m),
            ("init.yaw_spread_rad", i.yaw_spread_rad),
            ("init.tilt_spread_rad", i.tilt_spread_rad),
            ("init.velocity_spread_m_s", i.velocity_spread_m_s),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        let nonneg = |field: &str, vals: &[f64]| -> Result<()> {
            if vals.iter().all(|v| v.is_finite() && *v >= 0.0) {
                Ok(())
            } else {
                Err(Error::invalid(field, "weights must be finite and >= 0"))
            }
        };
        match &self.task {
            TaskSpec::StationKeeping {
                target_m,
                target_yaw_rad,
                weights: w,
            } => {
                if !target_m
                    .iter()
                    .chain([target_yaw_rad])
                    .all(|x| x.is_finite())
                {
                    return Err(Error::invalid("task.target_m", "non-finite"));
                }
                nonneg(
                    "task.weights",
                    &[
                        w.position,
                        w.attitude,
                        w.velocity,
                        w.command_rate,
                        w.bonus,
                        w.tolerance_m,
                    ],
                )?;
            }
            TaskSpec::Tracking {
                trajectory,
                tolerance_m,
                weights: w,
            } => {
                trajectory.validate()?;
                nonneg(
                    "task.weights",
                    &[w.position, w.velocity, w.command_rate, *tolerance_m],
                )?;
                if let Some(dt) = dt {
                    let needed = self.episode_steps as f64 * dt;
                    if needed > trajectory.duration_s * (1.0 + 1e-9) {
                        return Err(Error::invalid(
                            "episode_steps",
                            format!(
                                "episode lasts {needed} s but the trajectory only {} s",
                                trajectory.duration_s
                            ),
                        ));
                    }
                }
            }
            TaskSpec::Docking {
                dock,
                start_height_m,
                weights: w,
            } => {
                if !(dock.capture_radius_m.is_finite() && dock.capture_radius_m > 0.0) {
                    return Err(Error::invalid("task.dock.capture_radius_m", "must be > 0"));
                }
                if !dock
                    .centre
                    .iter()
                    .chain([&dock.contact_height_m])
                    .all(|x| x.is_finite())
                {
                    return Err(Error::invalid("task.dock", "non-finite"));
                }
                if !(start_height_m.is_finite() && *start_height_m > self.init.depth_spread_m) {
                    return Err(Error::invalid(
                        "task.start_height_m",
                        "must exceed init.depth_spread_m",
                    ));
                }
                nonneg(
                    "task.weights",
                    &[
                        w.position,
                        w.contact,
                        w.contact_distance,
                        w.contact_speed,
                        w.contact_attitude,
                    ],
                )?;
            }
        }
        Ok(())
    }

    /// Cost charged when an episode ends early by leaving the workspace or
    /// diverging: the position cost of sitting on the boundary for the
    /// remaining steps. Without it, leaving early would beat staying.
    pub fn exit_cost(&self, steps_taken: u64) -> f64 {
        let w = match &self.task {
            TaskSpec::StationKeeping { weights, .. } => weights.position,
            TaskSpec::Tracking { weights, .. } => weights.position,
            TaskSpec::Docking { weights, .. } => weights.position,
        };
        w * self.bounds_m * self.episode_steps.saturating_sub(steps_taken) as f64
    }

    /// Target position, attitude and reference velocity (NED) at time `t`.
    fn target(&self, t: f64) -> (Vector3<f64>, UnitQuaternion<f64>, Vector3<f64>) {
        match &self.task {
            TaskSpec::StationKeeping {
                target_m,
                target_yaw_rad,
                ..
            } => (
                *target_m,
                euler_to_quat(0.0, 0.0, *target_yaw_rad),
                Vector3::zeros(),
            ),
            TaskSpec::Tracking { trajectory, .. } => {
                let t = t.min(trajectory.duration_s);
                let (p, v) = reference_point(trajectory, t).expect("time clamped to trajectory");
                let yaw = if v.xy().norm() > 1e-9 {
                    v.y.atan2(v.x)
                } else {
                    0.0
                };
                (p, euler_to_quat(0.0, 0.0, yaw), v)
            }
            TaskSpec::Docking { dock, .. } => {
                (dock.centre, UnitQuaternion::identity(), Vector3::zeros())
            }
        }
    }

    /// Nominal start pose before the random spread.
    fn start(&self) -> (Vector3<f64>, f64) {
        match &self.task {
            TaskSpec::Docking {
                dock,
                start_height_m,
                ..
            } => (
                dock.centre - Vector3::new(0.0, 0.0, start_height_m + dock.contact_height_m),
                0.0,
            ),
            _ => {
                let (p, q, _) = self.target(0.0);
                (p, q.euler_angles().2)
            }
        }
    }
}

/// Per-env facts reported alongside every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub position_error: f64,
    pub attitude_error: f64,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact: Option<Contact>,
    pub diverged: bool,
    pub out_of_bounds: bool,
    /// Present on the step that finished an episode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeEnd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    /// Station-keeping: final distance to target. Tracking: mean deviation
    /// over the episode. Docking: planar distance at contact, or at the last
    /// step when no contact happened.
    pub metric: f64,
    pub success: bool,
    pub episode_return: f64,
    pub length: u64,
    pub terminal_observation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepBatch {
    /// `N × obs_dim`, row-major.
    pub observations: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: Vec<bool>,
    pub truncated: Vec<bool>,
    pub infos: Vec<StepInfo>,
}

struct TaskSampler<'a> {
    config: &'a TaskConfig,
    dr: &'a DrSpec,
}

fn symmetric(rng: &mut ChaCha8Rng, half_width: f64) -> f64 {
    half_width * (2.0 * rng.random::<f64>() - 1.0)
}

impl ResetSampler for TaskSampler<'_> {
    fn draw(&self, _env: usize, rng: &mut ChaCha8Rng) -> Result<ResetDraw> {
        let overlay = sample_overlay(self.dr, rng);
        let current_ned = current_from_overlay(&overlay, rng);
        let init = &self.config.init;
        let (start, yaw0) = self.config.start();
        let offset = Vector3::new(
            symmetric(rng, init.position_spread_m),
            symmetric(rng, init.position_spread_m),
            symmetric(rng, init.depth_spread_m),
        );
        let roll = symmetric(rng, init.tilt_spread_rad);
        let pitch = symmetric(rng, init.tilt_spread_rad);
        let yaw = yaw0 + symmetric(rng, init.yaw_spread_rad);
        let v = Vector3::new(
            symmetric(rng, init.velocity_spread_m_s),
            symmetric(rng, init.velocity_spread_m_s),
            symmetric(rng, init.velocity_spread_m_s),
        );
        Ok(ResetDraw {
            pose: Pose::from_euler(start + offset, roll, pitch, yaw),
            velocity: Vector6::new(v.x, v.y, v.z, 0.0, 0.0, 0.0),
            overlay,
            current_ned,
        })
    }
}

/// Batched environment with the usual reset/step contract.
pub struct VecEnv {
    config: TaskConfig,
    dr: DrSpec,
    sim: BatchSim,
    obs_dim: usize,
    observations: Vec<f64>,
    prev_commands: Vec<f64>,
    returns: Vec<f64>,
    error_sums: Vec<f64>,
    heights: Vec<f64>,
}

/// Builds a vectorized environment. `dr` overrides the level's default
/// randomization when given.
pub fn make_env(task: TaskConfig, sim: SimConfig, dr: Option<DrSpec>, seed: u64) -> Result<VecEnv> {
    task.validate(Some(sim.dt))?;
    let dr = dr.unwrap_or_else(|| task.level.dr_spec());
    dr.validate()?;
    let vehicle = load_vehicle(&task.vehicle)?;
    let sim = BatchSim::new(sim, vehicle, seed)?;
    let n = sim.n_envs();
    let width = sim.command_width();
    let obs_dim = BASE_OBS + width + task.kind().extra_obs();
    let mut env = VecEnv {
        config: task,
        dr,
        sim,
        obs_dim,
        observations: vec![0.0; n * obs_dim],
        prev_commands: vec![0.0; n * width],
        returns: vec![0.0; n],
        error_sums: vec![0.0; n],
        heights: vec![0.0; n],
    };
    env.reset();
    Ok(env)
}

impl VecEnv {
    pub fn n_envs(&self) -> usize {
        self.sim.n_envs()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.sim.command_width()
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn dr_spec(&self) -> &DrSpec {
        &self.dr
    }

    pub fn sim(&self) -> &BatchSim {
        &self.sim
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Simulated time of each env within its episode.
    pub fn time(&self, env: usize) -> f64 {
        self.sim.state().steps[env] as f64 * self.sim.config().dt
    }

    /// Resets every env with its own substream and returns the observations.
    pub fn reset(&mut self) -> &[f64] {
        let mask = vec![true; self.n_envs()];
        self.reset_masked(&mask, None)
            .expect("reset draws validated at construction");
        &self.observations
    }

    /// Resets every env using caller-chosen substream keys.
    pub fn reset_with_keys(&mut self, keys: &[RngKey]) -> Result<&[f64]> {
        if keys.len() != self.n_envs() {
            return Err(Error::Shape {
                expected: self.n_envs(),
                got: keys.len(),
            });
        }
        let mask = vec![true; self.n_envs()];
        self.reset_masked(&mask, Some(keys))?;
        Ok(&self.observations)
    }

    fn reset_masked(&mut self, mask: &[bool], keys: Option<&[RngKey]>) -> Result<()> {
        let sampler = TaskSampler {
            config: &self.config,
            dr: &self.dr,
        };
        match keys {
            Some(keys) => self.sim.reset_with_keys(mask, &|env| keys[env], &sampler)?,
            None => self.sim.reset(mask, &sampler)?,
        }
        let obs_dim = self.obs_dim;
        for env in (0..mask.len()).filter(|&i| mask[i]) {
            self.returns[env] = 0.0;
            self.error_sums[env] = 0.0;
            let (row, _) = observe(
                &self.config,
                &self.sim,
                env,
                &mut self.observations[env * obs_dim..(env + 1) * obs_dim],
            );
            self.heights[env] = row.height;
        }
        Ok(())
    }

    /// Applies one row of commands per env and advances the batch.
    pub fn step(&mut self, commands: &[f64]) -> Result<StepBatch> {
        let n = self.n_envs();
        let width = self.action_dim();
        self.prev_commands
            .copy_from_slice(&self.sim.state().commands);
        self.sim.step(commands)?;

        let config = &self.config;
        let sim = &self.sim;
        let obs_dim = self.obs_dim;
        let prev = &self.prev_commands;
        let episode_steps = config.episode_steps;
        let observations = &mut self.observations;
        let returns = &mut self.returns;
        let error_sums = &mut self.error_sums;
        let heights = &mut self.heights;
        let outcomes: Vec<(f64, bool, bool, StepInfo)> = sim.install(|| {
            observations
                .par_chunks_mut(obs_dim)
                .zip(returns.par_iter_mut())
                .zip(error_sums.par_iter_mut())
                .zip(heights.par_iter_mut())
                .enumerate()
                .with_min_len(64)
                .map(|(env, (((row, ret), err_sum), height))| {
                    let st = sim.state();
                    let (facts, nu) = observe(config, sim, env, row);
                    let cmd = &st.commands[env * width..(env + 1) * width];
                    let old = &prev[env * width..(env + 1) * width];
                    let delta = cmd
                        .iter()
                        .zip(old)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let pose = &st.poses[env];
                    let v_ned = pose.attitude * Vector3::new(nu[0], nu[1], nu[2]);
                    let mut contact = None;
                    let mut reward = match &config.task {
                        TaskSpec::StationKeeping { weights, .. } => reward_station_keeping(
                            weights,
                            &facts.position_error,
                            &facts.attitude_error,
                            &nu,
                            delta,
                        ),
                        TaskSpec::Tracking { weights, .. } => reward_tracking(
                            weights,
                            &pose.position,
                            &v_ned,
                            &facts.target,
                            &facts.v_ref,
                            delta,
                        ),
                        TaskSpec::Docking { weights, dock, .. } => {
                            let (r, c) = step_docking(weights, dock, *height, pose, &v_ned);
                            contact = c;
                            r
                        }
                    };
                    *height = facts.height;
                    let distance = facts.position_error.norm();
                    *err_sum += distance;
                    let diverged = st.diverged[env];
                    let out_of_bounds = distance > config.bounds_m;
                    if diverged || out_of_bounds {
                        reward -= config.exit_cost(st.steps[env]);
                    }
                    *ret += reward;
                    let terminated = diverged || out_of_bounds || contact.is_some();
                    let truncated = !terminated && st.steps[env] >= episode_steps;
                    let success = match &config.task {
                        TaskSpec::StationKeeping { weights, .. } => distance < weights.tolerance_m,
                        TaskSpec::Tracking { tolerance_m, .. } => {
                            *err_sum / st.steps[env].max(1) as f64 <= *tolerance_m
                        }
                        TaskSpec::Docking { .. } => contact.is_some(),
                    } && !diverged
                        && !out_of_bounds;
                    let episode = (terminated || truncated).then(|| {
                        let metric = match &config.task {
                            TaskSpec::StationKeeping { .. } => distance,
                            TaskSpec::Tracking { .. } => *err_sum / st.steps[env].max(1) as f64,
                            TaskSpec::Docking { dock, .. } => contact.map_or_else(
                                || dock.planar_distance(&pose.position),
                                |c| c.distance_m,
                            ),
                        };
                        EpisodeEnd {
                            metric,
                            success,
                            episode_return: *ret,
                            length: st.steps[env],
                            terminal_observation: row.to_vec(),
                        }
                    });
                    let info = StepInfo {
                        position_error: distance,
                        attitude_error: facts.attitude_error.norm(),
                        success,
                        contact,
                        diverged,
                        out_of_bounds,
                        episode,
                    };
                    (reward, terminated, truncated, info)
                })
                .collect()
        });

        let mut rewards = Vec::with_capacity(n);
        let mut terminated = Vec::with_capacity(n);
        let mut truncated = Vec::with_capacity(n);
        let mut infos = Vec::with_capacity(n);
        for (r, te, tr, info) in outcomes {
            rewards.push(r);
            terminated.push(te);
            truncated.push(tr);
            infos.push(info);
        }
        let mask: Vec<bool> = terminated
            .iter()
            .zip(&truncated)
            .map(|(a, b)| *a || *b)
            .collect();
        if mask.iter().any(|&m| m) {
            self.reset_masked(&mask, None)?;
        }
        Ok(StepBatch {
            observations: self.observations.clone(),
            rewards,
            terminated,
            truncated,
            infos,
        })
    }
}

struct Facts {
    position_error: Vector3<f64>,
    attitude_error: Vector3<f64>,
    target: Vector3<f64>,
    v_ref: Vector3<f64>,
    height: f64,
}

/// Writes env `env`'s observation into `row` and returns the quantities the
/// reward needs.
fn observe(
    config: &TaskConfig,
    sim: &BatchSim,
    env: usize,
    row: &mut [f64],
) -> (Facts, Vector6<f64>) {
    let st = sim.state();
    let width = sim.command_width();
    let pose = &st.poses[env];
    let nu = st.velocities[env];
    let t = st.steps[env] as f64 * sim.config().dt;
    let (target, q_target, v_ref) = config.target(t);
    let world_error = target - pose.position;
    let body_error = pose.attitude.inverse_transform_vector(&world_error);
    let att = attitude_error(&pose.attitude, &q_target);
    row[0..3].copy_from_slice(body_error.as_slice());
    row[3..6].copy_from_slice(att.as_slice());
    row[6..12].copy_from_slice(nu.as_slice());
    row[BASE_OBS..BASE_OBS + width].copy_from_slice(&st.commands[env * width..(env + 1) * width]);
    let extra = &mut row[BASE_OBS + width..];
    let mut height = 0.0;
    match &config.task {
        TaskSpec::StationKeeping { .. } => {}
        TaskSpec::Tracking { .. } => {
            extra.copy_from_slice(pose.attitude.inverse_transform_vector(&v_ref).as_slice());
        }
        TaskSpec::Docking { dock, .. } => {
            height = dock.height_above(&pose.position);
            extra[0] = height;
        }
    }
    (
        Facts {
            position_error: world_error,
            attitude_error: att,
            target,
            v_ref,
            height,
        },
        nu,
    )
}
