use novarl_core::advantage::{mean_pop_std, Algo};
use novarl_core::explore::load_state;
use novarl_core::optim::OptimizerKind;
use novarl_core::policy::PolicyParams;
use novarl_core::toytask::{generate_split, GenerationLimits, Mode, Problem};
use novarl_core::trainer::{
    exploration_diagnostic, metrics_from_correctness, read_log, train, train_with, MetricRow, StepView, TrainConfig,
    TrainOptions,
};
use novarl_core::Error;

fn data(n: usize) -> (Vec<Problem>, Vec<Problem>) {
    generate_split(1, n, 8, Mode::Countdown34, &GenerationLimits::default()).unwrap()
}

fn small() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.run.steps = 6;
    c.run.batch_size = 4;
    c.run.eval_interval = 3;
    c.run.eval_k = 2;
    c.run.check_invariants = true;
    c.policy.hidden = 16;
    c.policy.embed_dim = 8;
    c.warmstart.steps = 20;
    c.warmstart.demos = 16;
    c
}

#[test]
fn two_step_smoke_run() {
    let (train_set, test_set) = data(8);
    let mut c = small();
    c.run.steps = 2;
    let out = train(&c, &train_set, &test_set).unwrap();
    assert_eq!(out.log.len(), 2);
    assert_eq!(out.log[1].step, 1);
    assert!(out.log[1].eval_accuracy.is_some());
    for r in &out.log {
        assert!((0.0..=1.0).contains(&r.train_accuracy));
        assert!(r.mean_predictor_loss.is_some());
    }
}

#[test]
fn zero_alpha_is_vanilla() {
    let (train_set, test_set) = data(32);
    let mut off = small();
    off.run.imagine = false;
    let mut on = small();
    on.run.imagine = true;
    on.explore.alpha = 0.0;
    let a = train(&off, &train_set, &test_set).unwrap();
    let b = train(&on, &train_set, &test_set).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.log, b.log);
}

#[test]
fn identical_configs_give_identical_logs() {
    let (train_set, test_set) = data(32);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let opts = TrainOptions {
            out_dir: Some(d.path().to_path_buf()),
            ..Default::default()
        };
        train_with(&small(), &train_set, &test_set, opts).unwrap();
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("metrics.jsonl")).unwrap();
    assert_eq!(read(&dirs[0]), read(&dirs[1]));
}

#[test]
fn thread_count_does_not_change_results() {
    let (train_set, test_set) = data(32);
    let mut one = small();
    one.run.threads = 1;
    let mut three = small();
    three.run.threads = 3;
    let a = train(&one, &train_set, &test_set).unwrap();
    let b = train(&three, &train_set, &test_set).unwrap();
    assert_eq!(a.log, b.log);
}

#[test]
fn checkpoint_directory_layout() {
    let (train_set, test_set) = data(16);
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let out = train_with(&c, &train_set, &test_set, opts).unwrap();
    for step in [3, 6] {
        let d = dir.path().join(format!("step_{step}"));
        for f in ["policy.ckpt", "value_head.ckpt", "exploration.ckpt", "config.toml"] {
            assert!(d.join(f).is_file(), "{}", d.join(f).display());
        }
    }
    let last = dir.path().join("step_6");
    assert_eq!(PolicyParams::load(&last.join("policy.ckpt")).unwrap(), out.params);
    let (nets, schedule) = load_state(&last.join("exploration.ckpt")).unwrap();
    assert_eq!(Some(nets), out.nets);
    assert_eq!(schedule, out.schedule);
    assert_eq!(schedule.step, 6);
    let cfg = TrainConfig::from_toml(&std::fs::read_to_string(last.join("config.toml")).unwrap()).unwrap();
    assert_eq!(cfg, c);
    let log = read_log(&dir.path().join("metrics.jsonl")).unwrap();
    assert_eq!(log, out.log);
}

#[test]
fn metric_rows_use_the_documented_field_names() {
    let (train_set, test_set) = data(8);
    let dir = tempfile::tempdir().unwrap();
    let mut c = small();
    c.run.steps = 3;
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    train_with(&c, &train_set, &test_set, opts).unwrap();
    let text = std::fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
    let last: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(text.lines().last().unwrap()).unwrap();
    let mut keys: Vec<&str> = last.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(
        keys,
        [
            "decay_factor",
            "eval_accuracy",
            "max_outcome_reward",
            "mean_exploration_reward",
            "mean_outcome_reward",
            "mean_predictor_loss",
            "mean_response_length",
            "step",
            "train_accuracy",
            "wall_clock_seconds",
        ]
    );
}

#[test]
fn grpo_step_invariants_hold() {
    let (train_set, test_set) = data(32);
    let mut c = small();
    c.run.imagine = true;
    let mut steps = 0;
    let mut nonzero_bonus = 0;
    let mut check = |v: &StepView<'_>| {
        steps += 1;
        assert_eq!(v.trajectories.len(), c.run.batch_size * c.run.group_size);
        for chunk in v.group_advantages.chunks(v.group_size) {
            let (mean, std) = mean_pop_std(chunk);
            assert!(mean.abs() <= 1e-9);
            assert!(std == 0.0 || (std - 1.0).abs() <= 1e-6);
        }
        for (i, t) in v.trajectories.iter().enumerate() {
            let r = &v.records[i];
            assert!(r.reward >= 0.0 && r.reward <= v.alpha);
            for (a, b) in v.advantages_old[i].iter().zip(&v.advantages_new[i]) {
                assert!(b >= a);
            }
            if t.outcome.unwrap().correct {
                assert_eq!(r.reward, 0.0);
                assert_eq!(v.advantages_old[i], v.advantages_new[i]);
            }
            if r.reward > 0.0 {
                nonzero_bonus += 1;
            }
        }
    };
    let opts = TrainOptions {
        observer: Some(&mut check),
        ..Default::default()
    };
    train_with(&c, &train_set, &test_set, opts).unwrap();
    assert_eq!(steps, 6);
    assert!(nonzero_bonus > 0);
}

#[test]
fn ppo_adds_bonus_to_the_last_token_only() {
    let (train_set, test_set) = data(16);
    let mut c = small();
    c.run.algo = Algo::Ppo;
    c.run.batch_size = 8;
    let mut seen = 0;
    let mut check = |v: &StepView<'_>| {
        assert_eq!(v.group_size, 1);
        assert_eq!(v.trajectories.len(), 8);
        assert!(v.group_advantages.is_empty());
        for (i, (old, new)) in v.advantages_old.iter().zip(v.advantages_new).enumerate() {
            let n = old.len();
            if n == 0 {
                continue;
            }
            assert_eq!(&old[..n - 1], &new[..n - 1]);
            assert_eq!(new[n - 1], old[n - 1] + v.records[i].reward);
            seen += 1;
        }
    };
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        observer: Some(&mut check),
        ..Default::default()
    };
    train_with(&c, &train_set, &test_set, opts).unwrap();
    assert!(seen > 0);
    assert!(dir.path().join("step_6/value_head.ckpt").is_file());
}

#[test]
fn all_correct_step_leaves_advantages_alone() {
    // Memorize two problems, then sample almost greedily.
    let (train_set, test_set) = data(2);
    let mut c = small();
    c.run.batch_size = 2;
    c.run.steps = 3;
    c.policy.temperature = 0.05;
    c.warmstart.steps = 400;
    c.warmstart.lr = 1e-2;
    let mut all_correct_steps = 0;
    let mut check = |v: &StepView<'_>| {
        if v.trajectories.iter().all(|t| t.outcome.unwrap().correct) {
            all_correct_steps += 1;
            for (a, b) in v.advantages_old.iter().zip(v.advantages_new) {
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            assert!(v.records.iter().all(|r| r.reward == 0.0));
        }
    };
    let opts = TrainOptions {
        observer: Some(&mut check),
        ..Default::default()
    };
    train_with(&c, &train_set, &test_set, opts).unwrap();
    assert!(all_correct_steps > 0);
}

#[test]
fn runaway_learning_rate_aborts_with_a_dump() {
    let (train_set, test_set) = data(16);
    let mut c = small();
    c.run.imagine = true;
    c.policy.optimizer = OptimizerKind::Sgd;
    c.policy.lr = 1e300;
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    match train_with(&c, &train_set, &test_set, opts) {
        Err(Error::NonFinite { dump: Some(path), .. }) => assert!(path.is_file()),
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}

#[test]
fn config_errors_name_the_key() {
    let (train_set, test_set) = data(8);
    let mut c = small();
    c.run.group_size = 1;
    match train(&c, &train_set, &test_set) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "run.group_size"),
        other => panic!("{other:?}"),
    }
    let mut c = small();
    assert!(matches!(c.set("explore.gamma=0"), Ok(())));
    assert!(matches!(train(&c, &train_set, &test_set), Err(Error::Config { key, .. }) if key == "explore.gamma"));
    assert!(matches!(train(&small(), &[], &test_set), Err(Error::Config { .. })));
}

fn synthetic(f: impl Fn(f64) -> f64) -> Vec<MetricRow> {
    (0..300)
        .map(|t| MetricRow {
            step: t,
            train_accuracy: 0.0,
            eval_accuracy: None,
            mean_response_length: 0.0,
            mean_outcome_reward: 0.0,
            max_outcome_reward: 0.0,
            mean_predictor_loss: Some(f(t as f64)),
            mean_exploration_reward: 0.0,
            decay_factor: 1.0,
            wall_clock_seconds: None,
        })
        .collect()
}

#[test]
fn diagnostic_on_closed_form_decays() {
    let report = exploration_diagnostic(&[
        ("A".to_string(), synthetic(|t| 1.0 / (1.0 + t))),
        ("B".to_string(), synthetic(|t| 1.0 / (1.0 + 0.5 * t))),
    ])
    .unwrap();
    // least-squares slopes of ln L over t = 0..299, computed independently
    let (a, b) = (&report.runs[0], &report.runs[1]);
    assert!((a.slope - -0.009814852335556365).abs() < 1e-12, "{}", a.slope);
    assert!((b.slope - -0.009565208288238012).abs() < 1e-12, "{}", b.slope);
    assert!((a.linear_slope - -0.00028691026077404204).abs() < 1e-12);
    assert!((b.linear_slope - -0.00044518441327082387).abs() < 1e-12);
    assert_eq!(report.fastest_decay_first, vec!["A", "B"]);
}

#[test]
fn eval_metric_definitions() {
    let m = metrics_from_correctness(&[vec![true, false]], 2);
    assert_eq!(m.pass_at_k(), 1.0);
    assert_eq!(m.avg_at_k, 0.5);
    let flags = vec![vec![false, true, false, false], vec![false; 4], vec![true; 4]];
    let m1 = metrics_from_correctness(&flags, 1);
    assert_eq!(m1.pass_at_1(), m1.avg_at_k);
    let passes: Vec<f64> = (1..=4).map(|k| metrics_from_correctness(&flags, k).pass_at_k()).collect();
    assert!(passes.windows(2).all(|w| w[0] <= w[1]), "{passes:?}");
    let json = metrics_from_correctness(&flags, 4).to_json();
    assert!(json.get("pass@1").is_some() && json.get("pass@4").is_some() && json.get("avg@4").is_some());
}
