//! Outcome-based advantages: group-relative normalization (GRPO) and GAE (PPO).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Trajectory;

/// Groups whose population std is at or below this are treated as having
/// zero variance.
pub const GROUP_STD_EPS: f64 = 1e-6;

/// `(R_i - mean) / std` with the population std. Returns all zeros when
/// `std <= eps`.
pub fn group_normalize(rewards: &[f64], eps: f64) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Contract(format!(
            "group normalization needs at least 2 rewards, got {}",
            rewards.len()
        )));
    }
    let (mean, std) = mean_pop_std(rewards);
    if std <= eps {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

pub fn mean_pop_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaeConfig {
    /// Discount, in (0, 1].
    pub gamma: f64,
    /// Trace decay, in [0, 1].
    pub lambda: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        GaeConfig {
            gamma: 1.0,
            lambda: 1.0,
        }
    }
}

impl GaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gae.gamma", "must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config("gae.lambda", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Generalized advantage estimation.
///
/// `values` holds one estimate per token plus the bootstrap value after the
/// last token. Returns `(advantages, returns)` with `returns = A + V`.
pub fn gae(rewards: &[f64], values: &[f64], cfg: &GaeConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != rewards.len() + 1 {
        return Err(Error::Shape(format!(
            "gae: {} rewards need {} values, got {}",
            rewards.len(),
            rewards.len() + 1,
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + cfg.gamma * values[t + 1] - values[t];
        next = delta + cfg.gamma * cfg.lambda * next;
        adv[t] = next;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Outcome reward on the terminal token, zero elsewhere.
pub fn terminal_rewards(len: usize, outcome: f64) -> Vec<f64> {
    let mut r = vec![0.0; len];
    if let Some(last) = r.last_mut() {
        *last = outcome;
    }
    r
}

/// The rollouts for one problem and their outcome-based advantages.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub problem_id: u64,
    pub trajectories: Vec<Trajectory>,
    pub rewards: Vec<f64>,
    /// One scalar per trajectory (GRPO).
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    /// Scores must already be attached to every trajectory.
    pub fn grpo(problem_id: u64, trajectories: Vec<Trajectory>) -> Result<Self> {
        let rewards: Vec<f64> = trajectories
            .iter()
            .map(|t| {
                t.outcome
                    .map(|o| o.reward)
                    .ok_or_else(|| Error::Contract("trajectory has no outcome".into()))
            })
            .collect::<Result<_>>()?;
        let advantages = group_normalize(&rewards, GROUP_STD_EPS)?;
        Ok(RolloutGroup {
            problem_id,
            trajectories,
            rewards,
            advantages,
        })
    }

    /// Each token of trajectory `i` carries `advantages[i]`; empty responses
    /// give empty rows.
    pub fn broadcast(&self) -> Vec<Vec<f64>> {
        broadcast_advantage(&self.trajectories, &self.advantages)
    }
}

pub fn broadcast_advantage(trajectories: &[Trajectory], advantages: &[f64]) -> Vec<Vec<f64>> {
    trajectories
        .iter()
        .zip(advantages)
        .map(|(t, a)| vec![*a; t.response.len()])
        .collect()
}


/// Policy optimization algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    /// GAE advantages, value head, one rollout per problem.
    Ppo,
    /// Group-normalized outcome advantages, no value head.
    Grpo,
}

impl std::str::FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ppo" => Ok(Algo::Ppo),
            "grpo" => Ok(Algo::Grpo),
            other => Err(format!("unknown algorithm `{other}` (expected ppo or grpo)")),
        }
    }
}
