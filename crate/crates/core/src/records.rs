//! Line-delimited trajectory export.
//!
//! One JSON object per env per step:
//!
//! ```text
//! {"schema_version":1,"env":0,"episode":1,"step":0,"t":0.0,
//!  "p":[x,y,z],"quat":[w,x,y,z],"euler":[roll,pitch,yaw],
//!  "nu":[u,v,w,p,q,r],"commands":[...],"reward":-0.42}
//! ```
//!
//! `p`, `quat`, `euler`, `nu` and `t` describe the state when `commands`
//! were applied; `reward` is what that step earned. `step` counts batch
//! steps since the rollout began, `t` is time within the current episode.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cem::AffinePolicy;
use crate::error::{Error, Result};
use crate::task::VecEnv;

pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub schema_version: u32,
    pub env: usize,
    pub episode: u64,
    pub step: u64,
    pub t: f64,
    pub p: [f64; 3],
    pub quat: [f64; 4],
    pub euler: [f64; 3],
    pub nu: [f64; 6],
    pub commands: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

impl TrajectoryRecord {
    /// Parses one line and checks it against the documented format for a
    /// vehicle with `command_width` channels.
    pub fn parse_line(line: &str, command_width: usize) -> Result<Self> {
        let r: TrajectoryRecord =
            serde_json::from_str(line).map_err(|e| Error::parse("trajectory record", e))?;
        r.validate(command_width)?;
        Ok(r)
    }

    pub fn validate(&self, command_width: usize) -> Result<()> {
        if self.schema_version != RECORD_SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {RECORD_SCHEMA_VERSION}"),
            ));
        }
        if self.commands.len() != command_width {
            return Err(Error::Shape {
                expected: command_width,
                got: self.commands.len(),
            });
        }
        let numbers = self
            .p
            .iter()
            .chain(&self.quat)
            .chain(&self.euler)
            .chain(&self.nu)
            .chain(&self.commands);
        if !(self.t.is_finite() && self.t >= 0.0) || !numbers.clone().all(|x| x.is_finite()) {
            return Err(Error::invalid("record", "non-finite or negative time"));
        }
        let qn = self.quat.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("quat", format!("norm {qn} is not 1")));
        }
        if self.commands.iter().any(|c| c.abs() > 1.0)
            || self.reward.is_some_and(|r| !r.is_finite())
        {
            return Err(Error::invalid(
                "commands",
                "outside [-1, 1] or non-finite reward",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// `n_envs × steps` records, step-major.
    pub records: Vec<TrajectoryRecord>,
    /// Episodes that ended by numerical divergence.
    pub diverged: usize,
}

/// Steps `env` for `steps` batch steps under `policy` (zero commands when
/// `None`) from its current state.
pub fn rollout(env: &mut VecEnv, policy: Option<&AffinePolicy>, steps: u64) -> Result<Rollout> {
    if let Some(p) = policy {
        p.validate()?;
        p.check_env(env)?;
    }
    let n = env.n_envs();
    let width = env.action_dim();
    let dt = env.sim().config().dt;
    let mut obs = env.observations().to_vec();
    let mut out = Vec::with_capacity(n * steps as usize);
    let mut diverged = 0;
    for step in 0..steps {
        let commands = match policy {
            Some(p) => p.act_batch(&obs),
            None => vec![0.0; n * width],
        };
        let first = out.len();
        let st = env.sim().state();
        for env_idx in 0..n {
            let pose = &st.poses[env_idx];
            let q = pose.attitude.quaternion();
            out.push(TrajectoryRecord {
                schema_version: RECORD_SCHEMA_VERSION,
                env: env_idx,
                episode: st.episodes[env_idx],
                step,
                t: st.steps[env_idx] as f64 * dt,
                p: pose.position.into(),
                quat: [q.w, q.i, q.j, q.k],
                euler: pose.euler().as_array(),
                nu: st.velocities[env_idx].into(),
                commands: commands[env_idx * width..(env_idx + 1) * width].to_vec(),
                reward: None,
            });
        }
        let batch = env.step(&commands)?;
        for (r, reward) in out[first..].iter_mut().zip(&batch.rewards) {
            r.reward = Some(*reward);
        }
        diverged += batch
            .infos
            .iter()
            .filter(|i| i.diverged && i.episode.is_some())
            .count();
        obs = batch.observations;
    }
    Ok(Rollout {
        records: out,
        diverged,
    })
}

pub fn write_jsonl<W: Write>(records: &[TrajectoryRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::parse("trajectory record", e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
