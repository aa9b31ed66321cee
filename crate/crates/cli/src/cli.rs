use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tidegym::dr::Preset;
use tidegym::task::{Level, TaskKind};

#[derive(Debug, Parser)]
#[command(
    name = "tidegym",
    version,
    about = "Batched underwater-vehicle simulation and benchmarks"
)]
pub struct Cli {
    /// Human-readable table or line-delimited JSON records.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table, env = "TIDEGYM_FORMAT")]
    pub format: Format,

    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true, env = "TIDEGYM_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Table,
    Records,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Measure stepping throughput for one or more batch sizes.
    Bench(BenchArgs),
    /// Train an affine policy with the cross-entropy method.
    Train(TrainArgs),
    /// Evaluate a saved policy over independent trials.
    Eval(EvalArgs),
    /// Export per-step trajectory records.
    Rollout(RolloutArgs),
    /// Sample a randomization spec and summarize the draws.
    DrCheck(DrCheckArgs),
    /// Train with and without randomization and compare on both test presets.
    Ablation(AblationArgs),
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse().map_err(|e: tidegym::Error| e.to_string())
}

fn parse_level(s: &str) -> Result<Level, String> {
    s.parse().map_err(|e: tidegym::Error| e.to_string())
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: tidegym::Error| e.to_string())
}

fn parse_test_env(s: &str) -> Result<Preset, String> {
    match parse_preset(s)? {
        Preset::Train => Err("test env must be env1 or env2".into()),
        p => Ok(p),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    /// Control timestep, s.
    #[arg(long, default_value_t = 0.02, env = "TIDEGYM_DT")]
    pub dt: f64,
    /// Physics substeps per control step.
    #[arg(long, default_value_t = 1, env = "TIDEGYM_SUBSTEPS")]
    pub substeps: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TaskArgs {
    /// station_keeping, tracking or docking.
    #[arg(long, value_parser = parse_task, default_value = "station_keeping", env = "TIDEGYM_TASK")]
    pub task: TaskKind,
    /// Built-in vehicle name or path to a vehicle TOML file.
    #[arg(long, default_value = "bluerov_heavy", env = "TIDEGYM_VEHICLE")]
    pub vehicle: String,
    /// standard, disturbed or disturbed_dr.
    #[arg(long, value_parser = parse_level, default_value = "standard", env = "TIDEGYM_LEVEL")]
    pub level: Level,
    /// Task config TOML; replaces --task, --vehicle and --level.
    #[arg(long)]
    pub task_config: Option<PathBuf>,
    /// Override the task's episode length, steps.
    #[arg(long)]
    pub episode_steps: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DrArgs {
    /// Randomization preset: train, env1 or env2. Overrides the level's own.
    #[arg(long, value_parser = parse_preset, conflicts_with = "dr_file")]
    pub dr_preset: Option<Preset>,
    /// Randomization spec TOML. Overrides the level's own.
    #[arg(long)]
    pub dr_file: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value = "bluerov_heavy", env = "TIDEGYM_VEHICLE")]
    pub vehicle: String,
    /// Comma-separated batch sizes.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "1,2048",
        env = "TIDEGYM_ENVS"
    )]
    pub envs: Vec<usize>,
    /// Wall-clock seconds per batch size, warmup included.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Station-keeping task whose step is timed.
    #[arg(long, value_parser = parse_task, default_value = "station_keeping")]
    pub task: TaskKind,
    /// Time bare physics stepping instead of the task environment.
    #[arg(long)]
    pub raw: bool,
    /// Directory for records and manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub dr: DrArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 0, env = "TIDEGYM_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 512, env = "TIDEGYM_ENVS")]
    pub envs: usize,
    #[arg(long, default_value_t = 32)]
    pub population: usize,
    #[arg(long, default_value_t = 0.2)]
    pub elite_fraction: f64,
    #[arg(long, default_value_t = 100, env = "TIDEGYM_ITERATIONS")]
    pub iterations: usize,
    #[arg(long, default_value_t = 0.3)]
    pub init_std: f64,
    #[arg(long, default_value_t = 0.01)]
    pub extra_std: f64,
    /// Directory for policy.json, curve.jsonl and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Policy JSON written by `train`.
    #[arg(long)]
    pub policy: PathBuf,
    /// Defaults to the policy's task.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<TaskKind>,
    /// Defaults to the policy's vehicle.
    #[arg(long)]
    pub vehicle: Option<String>,
    /// Fixed test preset, env1 or env2. Without it the level's own
    /// randomization applies.
    #[arg(long, value_parser = parse_test_env)]
    pub test_env: Option<Preset>,
    #[arg(long, value_parser = parse_level, default_value = "standard")]
    pub level: Level,
    #[arg(long, default_value_t = 500, env = "TIDEGYM_TRIALS")]
    pub trials: usize,
    /// Base seed of the trial start states.
    #[arg(long, default_value_t = 0, env = "TIDEGYM_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 500, env = "TIDEGYM_ENVS")]
    pub envs: usize,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Directory for report.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RolloutArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub dr: DrArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Policy JSON; zero commands when absent.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub steps: u64,
    #[arg(long, default_value_t = 1, env = "TIDEGYM_ENVS")]
    pub envs: usize,
    #[arg(long, default_value_t = 0, env = "TIDEGYM_SEED")]
    pub seed: u64,
    /// Directory for trajectory.jsonl and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DrCheckArgs {
    #[arg(long, value_parser = parse_preset, default_value = "train", conflicts_with = "dr_file")]
    pub preset: Preset,
    /// Randomization spec TOML to check instead of a preset.
    #[arg(long)]
    pub dr_file: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0, env = "TIDEGYM_SEED")]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AblationArgs {
    #[arg(long, value_parser = parse_task, default_value = "station_keeping")]
    pub task: TaskKind,
    #[arg(long, default_value = "bluerov_heavy", env = "TIDEGYM_VEHICLE")]
    pub vehicle: String,
    #[arg(long, default_value_t = 0, env = "TIDEGYM_SEED")]
    pub seed: u64,
    #[arg(long, default_value_t = 500, env = "TIDEGYM_TRIALS")]
    pub trials: usize,
    #[arg(long, default_value_t = 100, env = "TIDEGYM_ITERATIONS")]
    pub iterations: usize,
    #[arg(long, default_value_t = 512, env = "TIDEGYM_ENVS")]
    pub envs: usize,
    #[arg(long, default_value_t = 32)]
    pub population: usize,
    /// Directory for report.json, both policies and curves, and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
