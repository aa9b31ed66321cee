//! Wall-clock throughput measurement.

use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{BatchSim, ResetDraw, SimConfig};
use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::task::{make_env, TaskConfig};
use crate::vehicle::VehicleConfig;

/// Share of the requested duration spent warming up before timing starts.
pub const WARMUP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub n_envs: usize,
    /// Batch steps inside the timed window.
    pub steps: u64,
    pub seconds: f64,
    /// Env-steps per second summed over the batch.
    pub aggregate: f64,
    pub per_env: f64,
}

/// Fixed, mildly varied command pattern so every actuator does work.
pub fn probe_commands(n_envs: usize, width: usize) -> Vec<f64> {
    (0..n_envs * width)
        .map(|k| 0.4 * (0.7 * (k % (width + 3)) as f64).sin())
        .collect()
}

fn measure(
    n_envs: usize,
    duration_s: f64,
    mut step: impl FnMut() -> Result<()>,
) -> Result<Throughput> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid("duration", "must be > 0"));
    }
    let warmup = Duration::from_secs_f64(duration_s * WARMUP_FRACTION);
    let start = Instant::now();
    let mut warm_steps = 0;
    while warm_steps < 2 || start.elapsed() < warmup {
        step()?;
        warm_steps += 1;
    }
    let window = Duration::from_secs_f64(duration_s * (1.0 - WARMUP_FRACTION));
    let start = Instant::now();
    let mut steps = 0u64;
    while steps == 0 || start.elapsed() < window {
        step()?;
        steps += 1;
    }
    let seconds = start.elapsed().as_secs_f64();
    let per_env = steps as f64 / seconds;
    Ok(Throughput {
        n_envs,
        steps,
        seconds,
        aggregate: per_env * n_envs as f64,
        per_env,
    })
}

/// Raw physics throughput: batched stepping only, no task layer.
pub fn throughput_probe(
    config: &SimConfig,
    vehicle: &VehicleConfig,
    duration_s: f64,
) -> Result<Throughput> {
    let mut sim = BatchSim::new(config.clone(), vehicle.clone(), 0)?;
    sim.reset_all(&|_env: usize, _rng: &mut ChaCha8Rng| {
        Ok(ResetDraw::at_rest(Pose::new(
            Vector3::new(0.0, 0.0, 5.0),
            UnitQuaternion::identity(),
        )))
    })?;
    let commands = probe_commands(sim.n_envs(), sim.command_width());
    measure(config.n_envs, duration_s, || sim.step(&commands))
}

/// Throughput of the full environment step: physics, observations, rewards
/// and auto-resets.
pub fn task_throughput_probe(
    task: &TaskConfig,
    config: &SimConfig,
    duration_s: f64,
) -> Result<Throughput> {
    let mut env = make_env(task.clone(), config.clone(), None, 0)?;
    let commands = probe_commands(env.n_envs(), env.action_dim());
    measure(config.n_envs, duration_s, || {
        env.step(&commands).map(|_| ())
    })
}
