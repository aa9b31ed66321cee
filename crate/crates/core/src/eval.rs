//! Fixed-seed policy evaluation and the DR/NDR comparison.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cem::{cem_train, AffinePolicy, CemConfig, CurvePoint};
use crate::dr::{DrSpec, Preset};
use crate::engine::{RngKey, SimConfig};
use crate::error::{Error, Result};
use crate::task::{make_env, Level, TaskConfig, TaskKind, VecEnv};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRIALS: usize = 500;

/// Metric aggregate over a set of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub success_rate: f64,
    /// Episodes that ended by numerical divergence.
    pub diverged: usize,
    pub metrics: Vec<f64>,
}

impl TrialStats {
    pub fn from_metrics(metrics: Vec<f64>, successes: usize, diverged: usize) -> Self {
        let n = metrics.len();
        let mean = metrics.iter().sum::<f64>() / n as f64;
        let var = metrics.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n as f64;
        Self {
            trials: n,
            mean,
            std: var.sqrt(),
            success_rate: successes as f64 / n as f64,
            diverged,
            metrics,
        }
    }
}

/// Runs `n_trials` episodes of `policy` on `env`. Trial `t` starts from the
/// substream `(base_seed, t, 0)`, so results do not depend on the batch size.
pub fn evaluate(
    policy: &AffinePolicy,
    env: &mut VecEnv,
    n_trials: usize,
    base_seed: u64,
) -> Result<TrialStats> {
    if n_trials == 0 {
        return Err(Error::invalid("trials", "must be >= 1"));
    }
    policy.validate()?;
    policy.check_env(env)?;
    let n = env.n_envs();
    let mut metrics = Vec::with_capacity(n_trials);
    let mut successes = 0;
    let mut diverged = 0;
    let mut first = 0;
    while first < n_trials {
        let keys: Vec<RngKey> = (0..n)
            .map(|i| RngKey {
                seed: base_seed,
                stream: (first + i) as u64,
                episode: 0,
            })
            .collect();
        let active = n.min(n_trials - first);
        let mut obs = env.reset_with_keys(&keys)?.to_vec();
        let mut result: Vec<Option<(f64, bool, bool)>> = vec![None; active];
        for _ in 0..env.config().episode_steps {
            let batch = env.step(&policy.act_batch(&obs))?;
            for (i, slot) in result.iter_mut().enumerate() {
                if slot.is_none() {
                    if let Some(ep) = &batch.infos[i].episode {
                        *slot = Some((ep.metric, ep.success, batch.infos[i].diverged));
                    }
                }
            }
            if result.iter().all(Option::is_some) {
                break;
            }
            obs = batch.observations;
        }
        for slot in result {
            let (metric, success, div) = slot.expect("every episode ends within its step limit");
            metrics.push(metric);
            successes += success as usize;
            diverged += div as usize;
        }
        first += active;
    }
    Ok(TrialStats::from_metrics(metrics, successes, diverged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub task: TaskKind,
    pub vehicle: String,
    /// `DR` or `NDR` for the ablation; free-form otherwise.
    pub setting: String,
    pub test_env: String,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub success_rate: f64,
}

impl EvalCell {
    pub fn new(
        task: TaskKind,
        vehicle: &str,
        setting: &str,
        test_env: &str,
        stats: &TrialStats,
    ) -> Self {
        Self {
            task,
            vehicle: vehicle.to_string(),
            setting: setting.to_string(),
            test_env: test_env.to_string(),
            trials: stats.trials,
            mean: stats.mean,
            std: stats.std,
            success_rate: stats.success_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    /// Unit of `mean` and `std`. Errors are distances, assumed metres.
    pub unit: String,
    pub base_seed: u64,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn new(base_seed: u64, cells: Vec<EvalCell>) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            unit: "m".into(),
            base_seed,
            cells,
        }
    }

    pub fn cell(&self, setting: &str, test_env: &str) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.setting == setting && c.test_env == test_env)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<16} {:<14} {:<8} {:<10} {:>7} {:>22} {:>8}",
            "task",
            "vehicle",
            "setting",
            "test_env",
            "trials",
            format!("error ({})", self.unit),
            "success"
        );
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:<16} {:<14} {:<8} {:<10} {:>7} {:>22} {:>7.1}%",
                c.task.name(),
                c.vehicle,
                c.setting,
                c.test_env,
                c.trials,
                format!("{:.4} ± {:.4}", c.mean, c.std),
                100.0 * c.success_rate
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("report", e))
    }
}

/// Builds the evaluation env for one of the fixed test presets.
pub fn test_env(
    task: &TaskConfig,
    preset: Preset,
    n_envs: usize,
    workers: Option<usize>,
) -> Result<VecEnv> {
    let sim = SimConfig {
        workers,
        ..SimConfig::with_envs(n_envs)
    };
    make_env(task.clone(), sim, Some(preset.spec()), 0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub train_envs: usize,
    pub eval_envs: usize,
    pub trials: usize,
    pub cem: CemConfig,
    pub workers: Option<usize>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train_envs: 512,
            eval_envs: 500,
            trials: DEFAULT_TRIALS,
            cem: CemConfig::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ablation {
    pub report: EvalReport,
    pub dr_policy: AffinePolicy,
    pub ndr_policy: AffinePolicy,
    pub dr_curve: Vec<CurvePoint>,
    pub ndr_curve: Vec<CurvePoint>,
}

/// Trains one policy without randomization (standard level) and one with the
/// training preset (disturbed_dr level), then evaluates both on the two test
/// presets. Both policies share the CEM seed; evaluation uses `seed`.
pub fn dr_ablation(
    kind: TaskKind,
    vehicle: &str,
    seed: u64,
    config: &AblationConfig,
) -> Result<Ablation> {
    let sim = SimConfig {
        workers: config.workers,
        ..SimConfig::with_envs(config.train_envs)
    };
    let cem = CemConfig {
        seed,
        ..config.cem.clone()
    };
    let train = |level: Level, dr: Option<DrSpec>| -> Result<_> {
        let mut env = make_env(TaskConfig::new(kind, vehicle, level), sim.clone(), dr, seed)?;
        cem_train(&mut env, &cem, None)
    };
    let ndr = train(Level::Standard, None)?;
    let dr = train(Level::DisturbedDr, Some(Preset::Train.spec()))?;

    let eval_task = TaskConfig::new(kind, vehicle, Level::DisturbedDr);
    let mut cells = Vec::with_capacity(4);
    for (setting, policy) in [("NDR", &ndr.policy), ("DR", &dr.policy)] {
        for (name, preset) in [("env1", Preset::TestEnv1), ("env2", Preset::TestEnv2)] {
            let mut env = test_env(&eval_task, preset, config.eval_envs, config.workers)?;
            let stats = evaluate(policy, &mut env, config.trials, seed)?;
            cells.push(EvalCell::new(kind, vehicle, setting, name, &stats));
        }
    }
    Ok(Ablation {
        report: EvalReport::new(seed, cells),
        dr_policy: dr.policy,
        ndr_policy: ndr.policy,
        dr_curve: dr.curve,
        ndr_curve: ndr.curve,
    })
}
