use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use tidegym::bench::{task_throughput_probe, throughput_probe, Throughput};
use tidegym::cem::{cem_train, AffinePolicy, CemConfig, CurvePoint};
use tidegym::dr::{empirical_check, DrSpec, ParamSummary};
use tidegym::engine::SimConfig;
use tidegym::eval::{dr_ablation, evaluate, AblationConfig, EvalCell, EvalReport};
use tidegym::records::{rollout, write_jsonl, TrajectoryRecord};
use tidegym::task::{make_env, Level, TaskConfig};
use tidegym::vehicle::load_vehicle;

use crate::cli::{
    AblationArgs, BenchArgs, DrArgs, DrCheckArgs, EvalArgs, Format, RolloutArgs, SimArgs, TaskArgs,
    TrainArgs,
};
use crate::manifest::{unix_now, RunManifest};

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Divergence(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Divergence(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Divergence(m) => m,
        }
    }
}

impl From<tidegym::Error> for Failure {
    fn from(e: tidegym::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(format!("i/o error: {e}"))
    }
}

type Outcome = Result<(), Failure>;

pub struct Ctx {
    pub format: Format,
    pub workers: Option<usize>,
}

impl Ctx {
    fn sim(&self, args: &SimArgs, n_envs: usize) -> SimConfig {
        SimConfig {
            dt: args.dt,
            substeps: args.substeps,
            n_envs,
            workers: self.workers,
        }
    }

    /// Prints `rows` as a table built by `table`, or as one JSON object per line.
    fn print<T: Serialize>(&self, rows: &[T], table: impl FnOnce(&[T]) -> String) -> Outcome {
        let stdout = std::io::stdout();
        let mut w = BufWriter::new(stdout.lock());
        match self.format {
            Format::Table => w.write_all(table(rows).as_bytes())?,
            Format::Records => {
                for r in rows {
                    serde_json::to_writer(&mut w, r).expect("row serializes");
                    w.write_all(b"\n")?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn prepare_dir(dir: Option<&PathBuf>) -> Result<Option<&Path>, Failure> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)
                .map_err(|e| Failure::Validation(format!("cannot create {}: {e}", d.display())))?;
            Ok(Some(d.as_path()))
        }
        None => Ok(None),
    }
}

fn write_lines<T: Serialize>(path: &Path, rows: &[T]) -> Outcome {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).expect("row serializes");
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_file(path: &Path, what: &str) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Validation(format!("cannot read {what} {}: {e}", path.display())))
}

fn resolve_task(args: &TaskArgs) -> Result<TaskConfig, Failure> {
    let mut task = match &args.task_config {
        Some(path) => TaskConfig::from_toml(&read_file(path, "task config")?)?,
        None => TaskConfig::new(args.task, &args.vehicle, args.level),
    };
    if let Some(steps) = args.episode_steps {
        task.episode_steps = steps;
    }
    Ok(task)
}

fn resolve_dr(args: &DrArgs) -> Result<Option<DrSpec>, Failure> {
    if let Some(path) = &args.dr_file {
        return Ok(Some(DrSpec::from_toml(&read_file(
            path,
            "randomization spec",
        )?)?));
    }
    Ok(args.dr_preset.map(|p| p.spec()))
}

fn load_policy(path: &Path) -> Result<AffinePolicy, Failure> {
    let text = read_file(path, "policy")?;
    AffinePolicy::from_json(&text)
        .map_err(|e| Failure::Validation(format!("bad policy {}: {e}", path.display())))
}

fn config_json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("config serializes")
}

pub fn bench(ctx: &Ctx, args: &BenchArgs) -> Outcome {
    let started = unix_now();
    let out = prepare_dir(args.out.as_ref())?;
    if args.envs.is_empty() {
        return Err(Failure::Validation(
            "--envs needs at least one batch size".into(),
        ));
    }
    let vehicle = load_vehicle(&args.vehicle)?;
    let task = TaskConfig::new(args.task, &args.vehicle, Level::Standard);
    let mut rows = Vec::with_capacity(args.envs.len());
    for &n in &args.envs {
        let sim = ctx.sim(&args.sim, n);
        let row = if args.raw {
            throughput_probe(&sim, &vehicle, args.duration)?
        } else {
            task_throughput_probe(&task, &sim, args.duration)?
        };
        rows.push(row);
    }
    ctx.print(&rows, |rows: &[Throughput]| {
        let mut s = format!(
            "{:>8} {:>10} {:>9} {:>16} {:>14}\n",
            "envs", "steps", "seconds", "aggregate/s", "per-env/s"
        );
        for r in rows {
            let _ = writeln!(
                s,
                "{:>8} {:>10} {:>9.3} {:>16.0} {:>14.1}",
                r.n_envs, r.steps, r.seconds, r.aggregate, r.per_env
            );
        }
        s
    })?;
    if let Some(dir) = out {
        write_lines(&dir.join("bench.jsonl"), &rows)?;
    }
    let config = json!({ "args": config_json(args), "workers": ctx.workers, "task": task });
    RunManifest::new("bench", config, None, started).emit(out)?;
    Ok(())
}

fn curve_table(rows: &[CurvePoint]) -> String {
    let mut s = format!(
        "{:>5} {:>14} {:>14} {:>14} {:>12}\n",
        "iter", "mean_return", "elite_return", "best_return", "mean_metric"
    );
    for c in rows {
        let _ = writeln!(
            s,
            "{:>5} {:>14.3} {:>14.3} {:>14.3} {:>12.4}",
            c.iteration, c.mean_return, c.elite_return, c.best_return, c.mean_metric
        );
    }
    s
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> Outcome {
    let started = unix_now();
    let out = prepare_dir(Some(&args.out))?.expect("output directory given");
    let task = resolve_task(&args.task)?;
    let dr = resolve_dr(&args.dr)?;
    let sim = ctx.sim(&args.sim, args.envs);
    let mut env = make_env(task.clone(), sim.clone(), dr, args.seed)?;
    let cem = CemConfig {
        population: args.population,
        elite_fraction: args.elite_fraction,
        iterations: args.iterations,
        init_std: args.init_std,
        extra_std: args.extra_std,
        fixed_starts: false,
        seed: args.seed,
    };
    let result = cem_train(&mut env, &cem, None)?;
    result.policy.save(&out.join("policy.json"))?;
    write_lines(&out.join("curve.jsonl"), &result.curve)?;
    ctx.print(&result.curve, curve_table)?;
    let config = json!({ "task": task, "dr": env.dr_spec(), "sim": sim, "cem": cem });
    RunManifest::new("train", config, Some(args.seed), started).emit(Some(out))?;
    Ok(())
}

pub fn eval(ctx: &Ctx, args: &EvalArgs) -> Outcome {
    let started = unix_now();
    let out = prepare_dir(args.out.as_ref())?;
    let policy = load_policy(&args.policy)?;
    let kind = args.task.unwrap_or(policy.task);
    if kind != policy.task {
        return Err(Failure::Validation(format!(
            "policy was trained for {}, not {}",
            policy.task.name(),
            kind.name()
        )));
    }
    let vehicle = args
        .vehicle
        .clone()
        .unwrap_or_else(|| policy.vehicle.clone());
    let task = TaskConfig::new(kind, &vehicle, args.level);
    let dr = args.test_env.map(|p| p.spec());
    let sim = ctx.sim(&args.sim, args.envs.min(args.trials).max(1));
    let mut env = make_env(task.clone(), sim.clone(), dr, args.seed)?;
    let stats = evaluate(&policy, &mut env, args.trials, args.seed)?;
    let test_env = match args.test_env {
        Some(p) => p.name().trim_start_matches("test_").to_string(),
        None => args.level.name().to_string(),
    };
    let report = EvalReport::new(
        args.seed,
        vec![EvalCell::new(kind, &vehicle, "policy", &test_env, &stats)],
    );
    ctx.print(&report.cells, |_| report.to_table())?;
    if let Some(dir) = out {
        std::fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    }
    let config = json!({ "policy": args.policy, "task": task, "dr": env.dr_spec(), "sim": sim, "trials": args.trials });
    RunManifest::new("eval", config, Some(args.seed), started).emit(out)?;
    if stats.diverged > 0 {
        return Err(Failure::Divergence(format!(
            "{} of {} trials diverged",
            stats.diverged, stats.trials
        )));
    }
    Ok(())
}

fn rollout_table(rows: &[TrajectoryRecord]) -> String {
    let mut s = format!(
        "{:>4} {:>6} {:>8} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8} {:>10}\n",
        "env", "step", "t", "x", "y", "z", "roll", "pitch", "yaw", "reward"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>8.2} {:>9.4} {:>9.4} {:>9.4} {:>8.4} {:>8.4} {:>8.4} {:>10.4}",
            r.env,
            r.step,
            r.t,
            r.p[0],
            r.p[1],
            r.p[2],
            r.euler[0],
            r.euler[1],
            r.euler[2],
            r.reward.unwrap_or(f64::NAN)
        );
    }
    s
}

pub fn rollout_cmd(ctx: &Ctx, args: &RolloutArgs) -> Outcome {
    let started = unix_now();
    let out = prepare_dir(args.out.as_ref())?;
    let task = resolve_task(&args.task)?;
    let dr = resolve_dr(&args.dr)?;
    let policy = args.policy.as_deref().map(load_policy).transpose()?;
    let sim = ctx.sim(&args.sim, args.envs);
    let mut env = make_env(task.clone(), sim.clone(), dr, args.seed)?;
    let result = rollout(&mut env, policy.as_ref(), args.steps)?;
    match out {
        Some(dir) => {
            let file = std::fs::File::create(dir.join("trajectory.jsonl"))?;
            let mut w = BufWriter::new(file);
            write_jsonl(&result.records, &mut w)?;
            w.flush()?;
        }
        None => ctx.print(&result.records, rollout_table)?,
    }
    let config = json!({ "task": task, "dr": env.dr_spec(), "sim": sim, "policy": args.policy, "steps": args.steps });
    RunManifest::new("rollout", config, Some(args.seed), started).emit(out)?;
    if result.diverged > 0 {
        return Err(Failure::Divergence(format!(
            "{} episodes diverged",
            result.diverged
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct CheckRow<'a> {
    #[serde(flatten)]
    summary: &'a ParamSummary,
    /// Relative deviation of the sample mean from the distribution mean.
    mean_rel_error: f64,
}

pub fn dr_check(ctx: &Ctx, args: &DrCheckArgs) -> Outcome {
    let started = unix_now();
    let out = prepare_dir(args.out.as_ref())?;
    let spec = match &args.dr_file {
        Some(path) => DrSpec::from_toml(&read_file(path, "randomization spec")?)?,
        None => args.preset.spec(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let summaries = empirical_check(&spec, args.samples, &mut rng)?;
    let rows: Vec<CheckRow> = summaries
        .iter()
        .map(|s| {
            let denom = s.expected_mean.abs().max(f64::EPSILON);
            CheckRow {
                summary: s,
                mean_rel_error: (s.mean - s.expected_mean).abs() / denom,
            }
        })
        .collect();
    ctx.print(&rows, |rows: &[CheckRow]| {
        let mut s = format!(
            "{:<22} {:>8} {:>19} {:>10} {:>10} {:>10} {:>10} {:>9} {:>6}\n",
            "key", "samples", "support", "min", "max", "mean", "expected", "rel_err", "ok"
        );
        for r in rows {
            let p = r.summary;
            let _ = writeln!(
                s,
                "{:<22} {:>8} {:>19} {:>10.5} {:>10.5} {:>10.5} {:>10.5} {:>9.2e} {:>6}",
                p.key.name(),
                p.samples,
                format!("[{:.3}, {:.3}]", p.support[0], p.support[1]),
                p.min,
                p.max,
                p.mean,
                p.expected_mean,
                r.mean_rel_error,
                if p.within_support { "yes" } else { "NO" }
            );
        }
        s
    })?;
    if let Some(dir) = out {
        write_lines(&dir.join("dr_check.jsonl"), &rows)?;
    }
    let config = json!({ "spec": spec, "samples": args.samples });
    RunManifest::new("dr-check", config, Some(args.seed), started).emit(out)?;
    if let Some(bad) = summaries.iter().find(|s| !s.within_support) {
        return Err(Failure::Validation(format!(
            "samples of `{}` left their support",
            bad.key.name()
        )));
    }
    Ok(())
}

pub fn ablation(ctx: &Ctx, args: &AblationArgs) -> Outcome {
    let started = unix_now();
    let out = prepare_dir(args.out.as_ref())?;
    let config = AblationConfig {
        train_envs: args.envs,
        eval_envs: args.trials.min(500),
        trials: args.trials,
        cem: CemConfig {
            population: args.population,
            iterations: args.iterations,
            ..CemConfig::default()
        },
        workers: ctx.workers,
    };
    let result = dr_ablation(args.task, &args.vehicle, args.seed, &config)?;
    ctx.print(&result.report.cells, |_| result.report.to_table())?;
    if let Some(dir) = out {
        std::fs::write(dir.join("report.json"), result.report.to_json() + "\n")?;
        result.dr_policy.save(&dir.join("policy_dr.json"))?;
        result.ndr_policy.save(&dir.join("policy_ndr.json"))?;
        write_lines(&dir.join("curve_dr.jsonl"), &result.dr_curve)?;
        write_lines(&dir.join("curve_ndr.jsonl"), &result.ndr_curve)?;
    }
    let manifest_config = json!({ "task": args.task, "vehicle": args.vehicle, "ablation": config });
    RunManifest::new("ablation", manifest_config, Some(args.seed), started).emit(out)?;
    Ok(())
}
