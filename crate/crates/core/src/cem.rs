//! Cross-entropy policy search over affine tanh policies.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::RngKey;
use crate::error::{Error, Result};
use crate::task::{TaskKind, VecEnv};

pub const POLICY_SCHEMA_VERSION: u32 = 1;

/// `command = tanh(W·obs + b)`, with `W` stored row-major (one row per
/// command channel) followed by `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePolicy {
    pub schema_version: u32,
    pub task: TaskKind,
    pub vehicle: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub params: Vec<f64>,
}

impl AffinePolicy {
    pub fn param_count(obs_dim: usize, action_dim: usize) -> usize {
        action_dim * (obs_dim + 1)
    }

    pub fn zeros(task: TaskKind, vehicle: &str, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            schema_version: POLICY_SCHEMA_VERSION,
            task,
            vehicle: vehicle.to_string(),
            obs_dim,
            action_dim,
            params: vec![0.0; Self::param_count(obs_dim, action_dim)],
        }
    }

    /// Zero policy shaped for `env`.
    pub fn for_env(env: &VecEnv) -> Self {
        Self::zeros(
            env.config().kind(),
            &env.config().vehicle,
            env.obs_dim(),
            env.action_dim(),
        )
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != POLICY_SCHEMA_VERSION {
            return Err(Error::invalid(
                "schema_version",
                format!("expected {POLICY_SCHEMA_VERSION}"),
            ));
        }
        let expected = Self::param_count(self.obs_dim, self.action_dim);
        if self.params.len() != expected {
            return Err(Error::Shape {
                expected,
                got: self.params.len(),
            });
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(Error::invalid("params", "non-finite parameter"));
        }
        Ok(())
    }

    /// Checks that the policy was shaped for `env`.
    pub fn check_env(&self, env: &VecEnv) -> Result<()> {
        if self.obs_dim != env.obs_dim() {
            return Err(Error::Shape {
                expected: env.obs_dim(),
                got: self.obs_dim,
            });
        }
        if self.action_dim != env.action_dim() {
            return Err(Error::Shape {
                expected: env.action_dim(),
                got: self.action_dim,
            });
        }
        Ok(())
    }

    pub fn act(&self, obs: &[f64], out: &mut [f64]) {
        act_with(&self.params, self.obs_dim, obs, out);
    }

    /// One command row per observation row.
    pub fn act_batch(&self, observations: &[f64]) -> Vec<f64> {
        let n = observations.len() / self.obs_dim;
        let mut out = vec![0.0; n * self.action_dim];
        out.par_chunks_mut(self.action_dim)
            .zip(observations.par_chunks(self.obs_dim))
            .with_min_len(64)
            .for_each(|(o, row)| self.act(row, o));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: AffinePolicy = serde_json::from_str(text).map_err(|e| Error::parse("policy", e))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn act_with(params: &[f64], obs_dim: usize, obs: &[f64], out: &mut [f64]) {
    let action_dim = out.len();
    let (weights, bias) = params.split_at(action_dim * obs_dim);
    for (a, o) in out.iter_mut().enumerate() {
        let row = &weights[a * obs_dim..(a + 1) * obs_dim];
        let pre = row.iter().zip(obs).map(|(w, x)| w * x).sum::<f64>() + bias[a];
        *o = pre.tanh();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    /// Candidates per iteration. The env batch is split into this many equal
    /// groups, one per candidate.
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub init_std: f64,
    /// Standard deviation added in quadrature after each refit so the
    /// search never collapses completely.
    pub extra_std: f64,
    /// Reuse the same start states every iteration instead of fresh ones.
    pub fixed_starts: bool,
    pub seed: u64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 32,
            elite_fraction: 0.2,
            iterations: 100,
            init_std: 0.3,
            extra_std: 0.01,
            fixed_starts: false,
            seed: 0,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 10 {
            return Err(Error::invalid("population", "must be >= 10"));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return Err(Error::invalid("elite_fraction", "must lie in (0, 1)"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", "must be >= 1"));
        }
        if !(self.init_std.is_finite()
            && self.init_std >= 0.0
            && self.extra_std.is_finite()
            && self.extra_std >= 0.0)
        {
            return Err(Error::invalid(
                "init_std",
                "standard deviations must be finite and >= 0",
            ));
        }
        Ok(())
    }

    pub fn n_elite(&self) -> usize {
        ((self.elite_fraction * self.population as f64).ceil() as usize).clamp(1, self.population)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    /// Mean fitness over the population.
    pub mean_return: f64,
    /// Best fitness seen so far, over all iterations.
    pub best_return: f64,
    pub elite_return: f64,
    /// Mean task metric of the sampling-mean candidate.
    pub mean_metric: f64,
}

#[derive(Debug, Clone)]
pub struct CemResult {
    /// Best candidate seen during training.
    pub policy: AffinePolicy,
    /// Final sampling mean.
    pub mean_policy: AffinePolicy,
    pub curve: Vec<CurvePoint>,
}

/// Runs cross-entropy search on `env`, starting from `init` (zero policy
/// when `None`).
///
/// Each iteration draws `population` parameter vectors, the first being
/// the current mean. Candidate `k` controls envs `k·g .. (k+1)·g` where
/// `g = n_envs / population`; env `k·g + j` starts from the same state for
/// every `k`. Fitness is the mean first-episode return of the group.
pub fn cem_train(
    env: &mut VecEnv,
    config: &CemConfig,
    init: Option<&AffinePolicy>,
) -> Result<CemResult> {
    config.validate()?;
    let n = env.n_envs();
    let m = config.population;
    if n < m || !n.is_multiple_of(m) {
        return Err(Error::invalid(
            "n_envs",
            format!("{n} envs cannot be split evenly into {m} candidates"),
        ));
    }
    let group = n / m;
    let template = match init {
        Some(p) => {
            p.validate()?;
            p.check_env(env)?;
            p.clone()
        }
        None => AffinePolicy::for_env(env),
    };
    let dim = template.params.len();
    let mut mean = template.params.clone();
    let mut std = vec![config.init_std; dim];
    let n_elite = config.n_elite();

    let mut best = (f64::NEG_INFINITY, mean.clone());
    let mut curve = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let mut rng = ChaCha8Rng::from_seed(iteration_seed(config.seed, iteration as u64));
        let candidates: Vec<Vec<f64>> = (0..m)
            .map(|k| {
                if k == 0 {
                    mean.clone()
                } else {
                    (0..dim)
                        .map(|i| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            mean[i] + std[i] * z
                        })
                        .collect()
                }
            })
            .collect();
        let episode = if config.fixed_starts {
            0
        } else {
            iteration as u64
        };
        let keys: Vec<RngKey> = (0..n)
            .map(|i| RngKey {
                seed: config.seed,
                stream: (i % group) as u64,
                episode,
            })
            .collect();
        let outcomes = run_groups(env, &candidates, group, &keys)?;
        let fitness: Vec<f64> = outcomes.iter().map(|o| o.0).collect();

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        let elite = &order[..n_elite];
        if fitness[order[0]] > best.0 {
            best = (fitness[order[0]], candidates[order[0]].clone());
        }
        for i in 0..dim {
            let mu = elite.iter().map(|&k| candidates[k][i]).sum::<f64>() / n_elite as f64;
            let var = elite
                .iter()
                .map(|&k| (candidates[k][i] - mu).powi(2))
                .sum::<f64>()
                / n_elite as f64;
            mean[i] = mu;
            std[i] = (var + config.extra_std * config.extra_std).sqrt();
        }
        curve.push(CurvePoint {
            iteration,
            mean_return: fitness.iter().sum::<f64>() / m as f64,
            best_return: best.0,
            elite_return: elite.iter().map(|&k| fitness[k]).sum::<f64>() / n_elite as f64,
            mean_metric: outcomes[0].1,
        });
    }
    Ok(CemResult {
        policy: template.with_params(best.1)?,
        mean_policy: template.with_params(mean)?,
        curve,
    })
}

fn iteration_seed(seed: u64, iteration: u64) -> [u8; 32] {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&iteration.to_le_bytes());
    bytes[16..24].copy_from_slice(b"cemdraws");
    bytes
}

/// Runs one episode per env, env `i` driven by `candidates[i / group]`, and
/// returns each candidate's mean (return, metric) over its group.
fn run_groups(
    env: &mut VecEnv,
    candidates: &[Vec<f64>],
    group: usize,
    keys: &[RngKey],
) -> Result<Vec<(f64, f64)>> {
    let n = env.n_envs();
    let obs_dim = env.obs_dim();
    let width = env.action_dim();
    let mut obs = env.reset_with_keys(keys)?.to_vec();
    let mut returns = vec![0.0; n];
    let mut metrics = vec![0.0; n];
    let mut done = vec![false; n];
    let mut commands = vec![0.0; n * width];
    for _ in 0..env.config().episode_steps {
        commands
            .par_chunks_mut(width)
            .zip(obs.par_chunks(obs_dim))
            .enumerate()
            .with_min_len(64)
            .for_each(|(i, (out, row))| act_with(&candidates[i / group], obs_dim, row, out));
        let batch = env.step(&commands)?;
        for i in 0..n {
            if done[i] {
                continue;
            }
            returns[i] += batch.rewards[i];
            if let Some(ep) = &batch.infos[i].episode {
                metrics[i] = ep.metric;
                done[i] = true;
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
        obs = batch.observations;
    }
    Ok((0..candidates.len())
        .map(|k| {
            let r = &returns[k * group..(k + 1) * group];
            let mm = &metrics[k * group..(k + 1) * group];
            (
                r.iter().sum::<f64>() / group as f64,
                mm.iter().sum::<f64>() / group as f64,
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SimConfig;
    use crate::task::{make_env, Level, TaskConfig};

    fn small_env(n: usize, steps: u64) -> VecEnv {
        let mut task = TaskConfig::new(TaskKind::StationKeeping, "bluerov_heavy", Level::Standard);
        task.episode_steps = steps;
        make_env(task, SimConfig::with_envs(n), None, 3).unwrap()
    }

    #[test]
    fn policy_output_is_squashed() {
        let env = small_env(1, 10);
        let mut p = AffinePolicy::for_env(&env);
        for (i, x) in p.params.iter_mut().enumerate() {
            *x = 50.0 * ((i as f64) * 0.37).sin();
        }
        let obs: Vec<f64> = (0..p.obs_dim).map(|i| i as f64 - 7.0).collect();
        let mut out = vec![0.0; p.action_dim];
        p.act(&obs, &mut out);
        assert!(out.iter().all(|c| (-1.0..=1.0).contains(c)));
        let batch = p.act_batch(&[obs.clone(), obs].concat());
        assert_eq!(&batch[..p.action_dim], &out[..]);
        assert_eq!(&batch[p.action_dim..], &out[..]);
    }

    #[test]
    fn bias_only_policy() {
        let env = small_env(1, 10);
        let p = AffinePolicy::for_env(&env);
        let mut params = p.params.clone();
        let nb = params.len();
        params[nb - 1] = 0.5;
        let p = p.with_params(params).unwrap();
        let mut out = vec![0.0; p.action_dim];
        p.act(&vec![1.0; p.obs_dim], &mut out);
        assert_eq!(out[p.action_dim - 1], 0.5f64.tanh());
        assert!(out[..p.action_dim - 1].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn policy_json_round_trip() {
        let env = small_env(1, 10);
        let p = AffinePolicy::for_env(&env);
        assert_eq!(AffinePolicy::from_json(&p.to_json()).unwrap(), p);
        let mut bad = p.clone();
        bad.params.pop();
        assert!(AffinePolicy::from_json(&bad.to_json()).is_err());
    }

    #[test]
    fn config_validation() {
        let env_n = 20;
        let mut env = small_env(env_n, 5);
        let cfg = CemConfig {
            population: 8,
            ..CemConfig::default()
        };
        assert!(cem_train(&mut env, &cfg, None).is_err());
        let cfg = CemConfig {
            population: 10,
            elite_fraction: 1.0,
            ..CemConfig::default()
        };
        assert!(cem_train(&mut env, &cfg, None).is_err());
        let cfg = CemConfig {
            population: 15,
            ..CemConfig::default()
        };
        assert!(cem_train(&mut env, &cfg, None).is_err());
    }

    #[test]
    fn deterministic_and_monotone_best() {
        let cfg = CemConfig {
            population: 10,
            iterations: 4,
            seed: 11,
            ..CemConfig::default()
        };
        let a = cem_train(&mut small_env(20, 40), &cfg, None).unwrap();
        let b = cem_train(&mut small_env(20, 40), &cfg, None).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.policy, b.policy);
        for w in a.curve.windows(2) {
            assert!(w[1].best_return >= w[0].best_return);
        }
    }

    #[test]
    fn zero_variance_keeps_initial_policy() {
        let mut env = small_env(20, 40);
        let mut init = AffinePolicy::for_env(&env);
        // crude depth hold: push the verticals along the body-z position error
        for a in 4..8 {
            init.params[a * init.obs_dim + 2] = 0.5;
        }
        let cfg = CemConfig {
            population: 10,
            iterations: 3,
            init_std: 0.0,
            extra_std: 0.0,
            fixed_starts: true,
            ..CemConfig::default()
        };
        let r = cem_train(&mut env, &cfg, Some(&init)).unwrap();
        assert_eq!(r.mean_policy, init);
        assert_eq!(r.policy, init);
        let first = r.curve[0].mean_return;
        assert!(r
            .curve
            .iter()
            .all(|c| c.mean_return == first && c.best_return == first));
    }
}
