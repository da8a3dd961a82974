//! Supervised warm start on solver demonstrations.
//!
//! RL fine-tuning presumes a policy that already produces the answer format
//! and occasionally solves a problem; a freshly initialized policy never
//! sees a non-zero outcome reward. The warm start fits the policy to
//! `<answer>{solution}</answer><eos>` responses for a sample of training
//! problems by minimizing the mean per-token negative log-likelihood.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::Optimizer;
use crate::policy::{gradients, LossConfig, PolicyParams, Trajectory};
use crate::rng;
use crate::toytask::{solver, Problem, Token, Vocabulary, ANSWER_CLOSE, ANSWER_OPEN, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarmStartConfig {
    /// Optimizer steps; 0 disables the warm start.
    pub steps: u64,
    /// Demonstrations per step.
    pub batch_size: usize,
    /// Number of training problems demonstrations are drawn from.
    pub demos: usize,
    pub lr: f64,
}

impl Default for WarmStartConfig {
    fn default() -> Self {
        WarmStartConfig {
            steps: 3000,
            batch_size: 32,
            demos: 4000,
            lr: 3e-3,
        }
    }
}

impl WarmStartConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps > 0 {
            if self.batch_size == 0 {
                return Err(Error::config("warmstart.batch_size", "must be at least 1"));
            }
            if self.demos == 0 {
                return Err(Error::config("warmstart.demos", "must be at least 1"));
            }
            if !(self.lr > 0.0 && self.lr.is_finite()) {
                return Err(Error::config("warmstart.lr", "must be positive"));
            }
        }
        Ok(())
    }
}

/// `<answer>{solution}</answer><eos>` for a solvable problem. Solutions
/// that keep the operand order are preferred.
pub fn demonstration(problem: &Problem, vocab: &Vocabulary) -> Option<Vec<Token>> {
    let expr = solver::solve_in_order(&problem.operands, problem.target).or_else(|| problem.certificate())?;
    vocab
        .tokenize(&format!("{ANSWER_OPEN}{expr}{ANSWER_CLOSE}{EOS}"))
        .ok()
}

/// Mean per-token NLL of the demonstrations under `params` and its gradient.
///
/// With `logprobs_old` set to the current log-probabilities every ratio is 1
/// and unit advantages make the clipped surrogate gradient equal to the
/// log-likelihood gradient.
pub(crate) fn nll_step(
    params: &PolicyParams,
    demos: &[(Vec<Token>, Vec<Token>)],
    temperature: f64,
) -> Result<(f64, PolicyParams)> {
    let policy = params.compile();
    let batch: Vec<Trajectory> = demos
        .iter()
        .map(|(q, o)| {
            let (logprobs, _) = policy.logprob_and_value(q, o, temperature);
            Trajectory {
                problem_id: 0,
                question: q.clone(),
                response: o.clone(),
                logprobs_old: logprobs,
                outcome: None,
            }
        })
        .collect();
    let nll = batch
        .iter()
        .map(|t| -t.logprobs_old.iter().sum::<f64>() / t.logprobs_old.len() as f64)
        .sum::<f64>()
        / batch.len() as f64;
    let ones: Vec<Vec<f64>> = batch.iter().map(|t| vec![1.0; t.response.len()]).collect();
    let cfg = LossConfig {
        temperature,
        ..LossConfig::default()
    };
    let (grad, _) = gradients(params, &batch, &ones, &cfg, None, None)?;
    Ok((nll, grad))
}

/// Runs the warm start in place. Returns the per-step NLL.
pub fn warm_start(
    params: &mut PolicyParams,
    cfg: &WarmStartConfig,
    optimizer: &mut Optimizer,
    train_set: &[Problem],
    temperature: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if cfg.steps == 0 {
        return Ok(Vec::new());
    }
    let vocab = Vocabulary::standard();
    let pool: Vec<(Vec<Token>, Vec<Token>)> = train_set
        .iter()
        .take(cfg.demos)
        .filter_map(|p| Some((p.question_tokens(&vocab), demonstration(p, &vocab)?)))
        .collect();
    if pool.is_empty() {
        return Err(Error::config("warmstart.demos", "no solvable demonstrations"));
    }
    let mut rng = rng::stream(seed, &[rng::tag::WARM_START]);
    let mut history = Vec::with_capacity(cfg.steps as usize);
    for _ in 0..cfg.steps {
        let batch: Vec<_> = (0..cfg.batch_size)
            .map(|_| pool[rng.random_range(0..pool.len())].clone())
            .collect();
        let (nll, grad) = nll_step(params, &batch, temperature)?;
        optimizer.step(params.as_mut_slice(), grad.as_slice());
        history.push(nll);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimizerKind;
    use crate::toytask::{generate_dataset, GenerationLimits, Mode};

    #[test]
    fn demonstration_is_correct() {
        let v = Vocabulary::standard();
        for p in generate_dataset(2, 20, Mode::Countdown34, &GenerationLimits::default()).unwrap() {
            let d = demonstration(&p, &v).unwrap();
            assert_eq!(crate::toytask::verify(&d, &p, &v).reward, 1.0);
            assert_eq!(*d.last().unwrap(), v.eos());
        }
    }

    #[test]
    fn nll_decreases() {
        let v = Vocabulary::standard();
        let problems = generate_dataset(3, 8, Mode::Countdown4, &GenerationLimits::default()).unwrap();
        let shape = crate::policy::PolicyShape {
            vocab: v.len(),
            embed: 8,
            window: 16,
            hidden: 16,
            pad: v.pad().id(),
            eos: v.eos().id(),
        };
        let mut p = PolicyParams::init(shape, 1);
        let cfg = WarmStartConfig {
            steps: 60,
            batch_size: 8,
            demos: 8,
            lr: 1e-2,
        };
        let mut opt = Optimizer::new(OptimizerKind::Adam, cfg.lr, p.param_count());
        let h = warm_start(&mut p, &cfg, &mut opt, &problems, 1.0, 0).unwrap();
        assert!((h[0] - (22f64).ln()).abs() < 1e-9);
        assert!(h[59] < 0.5 * h[0], "{} -> {}", h[0], h[59]);
    }
}
