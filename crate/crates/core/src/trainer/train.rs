use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde_json::json;

use super::eval::evaluate;
use super::{MetricRow, TrainConfig};
use crate::advantage::{
    broadcast_advantage, gae, group_normalize, mean_pop_std, terminal_rewards, Algo, GROUP_STD_EPS,
};
use crate::error::{Error, Result};
use crate::explore::{
    self, exploration_reward, inject, ExplorationNets, ExplorationSchedule, ExploreSample,
    NoveltyMode, NoveltyRecord, Phase, RunningStd,
};
use crate::optim::Optimizer;
use crate::policy::{gradients, CompiledPolicy, PolicyParams, Trajectory};
use crate::rng;
use crate::toytask::{verify, Problem, Vocabulary};

/// Everything the loop computed for one step, exposed to observers.
#[derive(Debug)]
pub struct StepView<'a> {
    pub step: u64,
    pub algo: Algo,
    pub group_size: usize,
    pub trajectories: &'a [Trajectory],
    pub advantages_old: &'a [Vec<f64>],
    pub advantages_new: &'a [Vec<f64>],
    /// Per-trajectory scalar GRPO advantages (empty for PPO).
    pub group_advantages: &'a [f64],
    pub records: &'a [NoveltyRecord],
    pub alpha: f64,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Where metrics, checkpoints and failure dumps go.
    pub out_dir: Option<PathBuf>,
    pub observer: Option<&'a mut dyn FnMut(&StepView<'_>)>,
    /// Starting policy. Replaces initialization and warm start.
    pub initial_params: Option<PolicyParams>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: PolicyParams,
    pub log: Vec<MetricRow>,
    pub nets: Option<ExplorationNets>,
    pub schedule: ExplorationSchedule,
}

pub fn train(config: &TrainConfig, train_set: &[Problem], test_set: &[Problem]) -> Result<TrainOutput> {
    train_with(config, train_set, test_set, TrainOptions::default())
}

struct Dump<'a> {
    out_dir: Option<&'a Path>,
    step: u64,
}

impl Dump<'_> {
    fn non_finite(&self, what: &str, detail: serde_json::Value) -> Error {
        let dump = self.out_dir.and_then(|dir| {
            let path = dir.join("nan_dump.json");
            let body = json!({ "step": self.step, "what": what, "detail": detail });
            fs::write(&path, serde_json::to_string_pretty(&body).ok()?).ok()?;
            Some(path)
        });
        Error::NonFinite {
            step: self.step,
            what: what.to_string(),
            dump,
        }
    }
}

fn invariant(step: u64, what: impl Into<String>) -> Error {
    Error::Invariant {
        step,
        what: what.into(),
    }
}

fn check_group_stats(step: u64, group_adv: &[f64], g: usize) -> Result<()> {
    for (i, chunk) in group_adv.chunks(g).enumerate() {
        let (mean, std) = mean_pop_std(chunk);
        let ok_std = std == 0.0 || (std - 1.0).abs() <= 1e-6;
        if mean.abs() > 1e-9 || !ok_std {
            return Err(invariant(
                step,
                format!("group {i} advantages have mean {mean}, std {std}"),
            ));
        }
    }
    Ok(())
}

fn check_injection(
    step: u64,
    old: &[Vec<f64>],
    new: &[Vec<f64>],
    trajectories: &[Trajectory],
    records: &[NoveltyRecord],
    schedule: &ExplorationSchedule,
) -> Result<()> {
    for (i, ((o, n), t)) in old.iter().zip(new).zip(trajectories).enumerate() {
        if o.iter().zip(n).any(|(a, b)| b < a) {
            return Err(invariant(step, format!("trajectory {i}: injected advantage decreased")));
        }
        let correct = t.outcome.is_some_and(|l| l.correct);
        let same_bits = o.iter().zip(n).all(|(a, b)| a.to_bits() == b.to_bits());
        if correct && !same_bits {
            return Err(invariant(step, format!("correct trajectory {i} changed")));
        }
    }
    for r in records {
        let bounded = schedule.mode != NoveltyMode::MinmaxDecay || r.reward <= schedule.alpha;
        if !(r.reward >= 0.0) || !bounded || r.reward > r.conditioned || r.conditioned > r.normalized {
            return Err(invariant(step, format!("record {} out of range: {r:?}", r.index)));
        }
    }
    Ok(())
}

fn save_checkpoint(
    dir: &Path,
    step: u64,
    config: &TrainConfig,
    params: &PolicyParams,
    nets: Option<&ExplorationNets>,
    schedule: &ExplorationSchedule,
) -> Result<()> {
    let ckpt = dir.join(format!("step_{step}"));
    fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    params.save(&ckpt.join("policy.ckpt"))?;
    params.save_value_head(&ckpt.join("value_head.ckpt"))?;
    if let Some(n) = nets {
        explore::save_state(&ckpt.join("exploration.ckpt"), n, schedule)?;
    }
    let cfg = ckpt.join("config.toml");
    fs::write(&cfg, config.to_toml()).map_err(|e| Error::io(&cfg, e))
}

/// Freshly initialized policy, warm-started when `warmstart.steps > 0`.
pub fn initial_policy(config: &TrainConfig, train_set: &[Problem]) -> Result<PolicyParams> {
    config.validate()?;
    let vocab = Vocabulary::standard();
    let shape = config.policy_shape(&vocab);
    let mut params = PolicyParams::init(shape, rng::derive(config.run.seed, &[rng::tag::POLICY_INIT]));
    if config.warmstart.steps > 0 {
        let mut opt = Optimizer::new(config.policy.optimizer, config.warmstart.lr, params.param_count());
        let nll = super::warm_start(
            &mut params,
            &config.warmstart,
            &mut opt,
            train_set,
            config.policy.temperature,
            config.run.seed,
        )?;
        log::info!("warm start: nll {:.3} -> {:.3}", nll[0], nll[nll.len() - 1]);
    }
    Ok(params)
}

/// Runs the full loop. Deterministic for a fixed config: every random draw
/// comes from a stream derived from `run.seed`, and rollouts are seeded per
/// (step, problem, sample) so worker count does not matter.
pub fn train_with(
    config: &TrainConfig,
    train_set: &[Problem],
    test_set: &[Problem],
    mut opts: TrainOptions<'_>,
) -> Result<TrainOutput> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("data.train", "training set is empty"));
    }
    if test_set.is_empty() {
        return Err(Error::config("data.test", "test set is empty"));
    }
    let run = &config.run;
    let pool = if run.threads > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(run.threads)
                .build()
                .map_err(|e| Error::config("run.threads", e.to_string()))?,
        )
    } else {
        None
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let vocab = Vocabulary::standard();
    let shape = config.policy_shape(&vocab);
    let algo = run.algo;
    let g = config.rollouts_per_problem();
    let loss_cfg = config.loss();

    let mut params = match opts.initial_params.take() {
        Some(p) if *p.shape() != shape => {
            return Err(Error::Shape("initial parameters do not match the configured policy".into()))
        }
        Some(p) => p,
        None => initial_policy(config, train_set)?,
    };
    let reference = (config.policy.kl_beta > 0.0).then(|| params.clone());
    let mut optimizer = Optimizer::new(config.policy.optimizer, config.policy.lr, params.param_count());

    let track = run.imagine || run.track_novelty;
    let mut nets = track.then(|| {
        ExplorationNets::new(vocab.len(), rng::derive(run.seed, &[rng::tag::EXPLORE]), config.explore.lr)
    });
    let mut schedule = ExplorationSchedule {
        alpha: config.explore.alpha,
        gamma: config.explore.gamma,
        step: 0,
        mode: config.explore.mode,
        running: RunningStd::new(config.explore.momentum),
    };

    let mut data_rng = rng::stream(run.seed, &[rng::tag::DATA]);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let eval_gen = config.generation(rng::derive(run.seed, &[rng::tag::EVAL]));
    let eval_set = match run.eval_problems {
        0 => test_set,
        n => &test_set[..n.min(test_set.len())],
    };
    let questions: Vec<_> = train_set.iter().map(|p| p.question_tokens(&vocab)).collect();

    let started = Instant::now();
    let mut log = Vec::with_capacity(run.steps as usize);
    let log_path = opts.out_dir.as_ref().map(|d| d.join("metrics.jsonl"));

    for step in 0..run.steps {
        let dump = Dump {
            out_dir: opts.out_dir.as_deref(),
            step,
        };
        let batch: Vec<usize> = (0..run.batch_size)
            .map(|_| {
                if cursor == order.len() {
                    order.shuffle(&mut data_rng);
                    cursor = 0;
                }
                cursor += 1;
                order[cursor - 1]
            })
            .collect();

        // rollouts
        let policy = params.compile();
        let jobs: Vec<(usize, usize)> = (0..batch.len()).flat_map(|b| (0..g).map(move |k| (b, k))).collect();
        let rollout = |&(b, k): &(usize, usize)| {
            let problem = &train_set[batch[b]];
            let gen = config.generation(rng::derive(
                run.seed,
                &[rng::tag::SAMPLING, step, b as u64, k as u64],
            ));
            let mut t = policy.sample(&questions[batch[b]], &gen);
            t.problem_id = problem.id;
            t.outcome = Some(verify(&t.response, problem, &vocab));
            t
        };
        let trajectories: Vec<Trajectory> = match &pool {
            Some(p) => p.install(|| jobs.par_iter().map(rollout).collect()),
            None => jobs.par_iter().map(rollout).collect(),
        };
        let rewards: Vec<f64> = trajectories
            .iter()
            .map(|t| t.outcome.expect("scored").reward)
            .collect();

        // outcome advantages
        let mut group_adv = Vec::new();
        let mut returns = None;
        let advantages_old: Vec<Vec<f64>> = match algo {
            Algo::Grpo => {
                for chunk in rewards.chunks(g) {
                    group_adv.extend(group_normalize(chunk, GROUP_STD_EPS)?);
                }
                if run.check_invariants {
                    check_group_stats(step, &group_adv, g)?;
                }
                broadcast_advantage(&trajectories, &group_adv)
            }
            Algo::Ppo => {
                let mut adv = Vec::with_capacity(trajectories.len());
                let mut ret = Vec::with_capacity(trajectories.len());
                for (t, r) in trajectories.iter().zip(&rewards) {
                    let (_, mut values) = policy.logprob_and_value(&t.question, &t.response, config.policy.temperature);
                    // every response ends the episode
                    *values.last_mut().expect("bootstrap value") = 0.0;
                    let (a, rt) = gae(&terminal_rewards(t.response.len(), *r), &values, &config.gae)?;
                    adv.push(a);
                    ret.push(rt);
                }
                returns = Some(ret);
                adv
            }
        };

        // exploration
        let samples: Vec<ExploreSample<'_>> = trajectories
            .iter()
            .map(|t| ExploreSample {
                problem_id: t.problem_id,
                question: &t.question,
                response: &t.response,
                correct: t.outcome.is_some_and(|o| o.correct),
            })
            .collect();
        let decay = schedule.decay_factor();
        let mut predictor_loss = None;
        let mut records = Vec::new();
        if let Some(n) = nets.as_mut() {
            let pairs: Vec<_> = samples.iter().map(|s| (s.question, s.response)).collect();
            let loss = n.update_predictor(&pairs)?;
            if !loss.is_finite() {
                return Err(dump.non_finite("predictor loss", json!({ "loss": loss.to_string() })));
            }
            predictor_loss = Some(loss);
            if run.imagine {
                records = exploration_reward(n, &mut schedule, &samples, Phase::Train)?;
            }
        }
        let advantages_new = if run.imagine {
            let new = inject(&advantages_old, &records, algo)?;
            if run.check_invariants {
                check_injection(step, &advantages_old, &new, &trajectories, &records, &schedule)?;
                if algo == Algo::Grpo {
                    check_group_stats(step, &group_adv, g)?;
                }
            }
            new
        } else {
            advantages_old.clone()
        };
        if let Some(obs) = opts.observer.as_mut() {
            obs(&StepView {
                step,
                algo,
                group_size: g,
                trajectories: &trajectories,
                advantages_old: &advantages_old,
                advantages_new: &advantages_new,
                group_advantages: &group_adv,
                records: &records,
                alpha: schedule.alpha,
            });
        }

        // policy update
        for _ in 0..run.inner_epochs {
            let (grad, stats) = gradients(
                &params,
                &trajectories,
                &advantages_new,
                &loss_cfg,
                reference.as_ref(),
                returns.as_deref(),
            )?;
            if !stats.loss.is_finite() || !grad.is_finite() {
                return Err(dump.non_finite(
                    "policy loss",
                    json!({ "loss": stats.loss.to_string(), "kl": stats.kl.to_string(),
                            "value_loss": stats.value_loss.to_string() }),
                ));
            }
            optimizer.step(params.as_mut_slice(), grad.as_slice());
            if !params.is_finite() {
                return Err(dump.non_finite("policy parameters", json!({})));
            }
        }
        schedule.advance();

        let n = trajectories.len() as f64;
        let last = step + 1 == run.steps;
        let eval_accuracy = if (step + 1) % run.eval_interval == 0 || last {
            let m = evaluate(&params.compile(), eval_set, &eval_gen, run.eval_k, &vocab);
            log::info!("step {}: eval avg@{} {:.4}", step + 1, run.eval_k, m.avg_at_k);
            if let Some(dir) = &opts.out_dir {
                save_checkpoint(dir, step + 1, config, &params, nets.as_ref(), &schedule)?;
            }
            Some(m.avg_at_k)
        } else {
            None
        };
        let row = MetricRow {
            step,
            train_accuracy: trajectories.iter().filter(|t| t.outcome.is_some_and(|o| o.correct)).count() as f64 / n,
            eval_accuracy,
            mean_response_length: trajectories.iter().map(|t| t.response.len() as f64).sum::<f64>() / n,
            mean_outcome_reward: rewards.iter().sum::<f64>() / n,
            max_outcome_reward: rewards.iter().copied().fold(0.0, f64::max),
            mean_predictor_loss: predictor_loss,
            mean_exploration_reward: records.iter().fold(0.0, |acc, r| acc + r.reward) / n,
            decay_factor: decay,
            wall_clock_seconds: run.record_wall_clock.then(|| started.elapsed().as_secs_f64()),
        };
        log::debug!(
            "step {step}: train acc {:.3}, reward {:.3}, len {:.1}",
            row.train_accuracy,
            row.mean_outcome_reward,
            row.mean_response_length
        );
        log.push(row);
        if let Some(path) = &log_path {
            super::write_log(path, &log)?;
        }
    }

    Ok(TrainOutput {
        params,
        log,
        nets,
        schedule,
    })
}

/// Convenience for callers that only need a compiled snapshot.
impl TrainOutput {
    pub fn policy(&self) -> CompiledPolicy {
        self.params.compile()
    }
}
