use tidegym::cem::{cem_train, AffinePolicy, CemConfig};
use tidegym::dr::Preset;
use tidegym::engine::SimConfig;
use tidegym::eval::{dr_ablation, evaluate, test_env, AblationConfig, EvalReport};
use tidegym::task::{make_env, Level, TaskConfig, TaskKind};

fn short_task() -> TaskConfig {
    let mut task = TaskConfig::new(TaskKind::StationKeeping, "bluerov_heavy", Level::Standard);
    task.episode_steps = 60;
    task
}

fn tiny_cem(seed: u64) -> CemConfig {
    CemConfig {
        population: 10,
        iterations: 3,
        seed,
        ..CemConfig::default()
    }
}

#[test]
fn cem_runs_are_reproducible() {
    let train = |seed| {
        let mut env = make_env(short_task(), SimConfig::with_envs(40), None, seed).unwrap();
        cem_train(&mut env, &tiny_cem(seed), None).unwrap()
    };
    let a = train(7);
    let b = train(7);
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.policy, b.policy);
    let c = train(8);
    assert_ne!(a.policy.params, c.policy.params);
}

#[test]
fn best_so_far_curve_never_drops() {
    let mut env = make_env(short_task(), SimConfig::with_envs(40), None, 1).unwrap();
    let result = cem_train(
        &mut env,
        &CemConfig {
            iterations: 6,
            ..tiny_cem(1)
        },
        None,
    )
    .unwrap();
    assert_eq!(result.curve.len(), 6);
    for pair in result.curve.windows(2) {
        assert!(pair[1].best_return >= pair[0].best_return);
    }
}

#[test]
fn evaluation_ignores_batch_size() {
    let task = short_task();
    let probe = make_env(task.clone(), SimConfig::with_envs(1), None, 0).unwrap();
    let mut params = vec![0.0; AffinePolicy::param_count(probe.obs_dim(), probe.action_dim())];
    for (k, p) in params.iter_mut().enumerate() {
        *p = 0.05 * ((k % 7) as f64 - 3.0);
    }
    let policy = AffinePolicy::for_env(&probe).with_params(params).unwrap();
    let stats = |n_envs| {
        let mut env = test_env(&task, Preset::TestEnv1, n_envs, None).unwrap();
        evaluate(&policy, &mut env, 12, 99).unwrap()
    };
    let a = stats(12);
    let b = stats(5);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.trials, 12);
}

#[test]
fn env2_is_no_easier_than_env1_for_a_passive_policy() {
    let task = short_task();
    let probe = make_env(task.clone(), SimConfig::with_envs(1), None, 0).unwrap();
    let policy = AffinePolicy::for_env(&probe);
    let mean = |preset| {
        let mut env = test_env(&task, preset, 100, None).unwrap();
        evaluate(&policy, &mut env, 100, 3).unwrap().mean
    };
    assert!(mean(Preset::TestEnv2) >= mean(Preset::TestEnv1));
}

#[test]
fn ablation_reports_are_reproducible() {
    let mut config = AblationConfig {
        train_envs: 20,
        eval_envs: 10,
        trials: 10,
        ..AblationConfig::default()
    };
    config.cem = tiny_cem(0);
    config.cem.iterations = 2;
    let a = dr_ablation(TaskKind::StationKeeping, "bluerov", 4, &config).unwrap();
    let b = dr_ablation(TaskKind::StationKeeping, "bluerov", 4, &config).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.report.cells.len(), 4);
    for setting in ["DR", "NDR"] {
        for env in ["env1", "env2"] {
            assert_eq!(a.report.cell(setting, env).unwrap().trials, 10);
        }
    }
    assert_eq!(
        EvalReport::from_json(&a.report.to_json()).unwrap(),
        a.report
    );
}
