use serde::{Deserialize, Serialize};

use super::ExplorationNets;
use crate::advantage::Algo;
use crate::error::{Error, Result};
use crate::toytask::Token;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyMode {
    /// Raw error divided by a running standard deviation.
    RndStd,
    /// Batch min-max scaling to `[0, α]` followed by `γ/(γ+n)` decay.
    MinmaxDecay,
}

impl std::str::FromStr for NoveltyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "rnd_std" => Ok(NoveltyMode::RndStd),
            "minmax_decay" => Ok(NoveltyMode::MinmaxDecay),
            other => Err(format!("unknown novelty mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    /// Running statistics are read but never updated.
    Eval,
}

/// Exponential moving estimate of the standard deviation of raw errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunningStd {
    pub momentum: f64,
    pub mean: f64,
    pub mean_sq: f64,
    pub initialized: bool,
}

impl RunningStd {
    pub fn new(momentum: f64) -> Self {
        RunningStd {
            momentum,
            mean: 0.0,
            mean_sq: 0.0,
            initialized: false,
        }
    }

    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
        if self.initialized {
            self.mean = self.momentum * self.mean + (1.0 - self.momentum) * m;
            self.mean_sq = self.momentum * self.mean_sq + (1.0 - self.momentum) * m2;
        } else {
            self.mean = m;
            self.mean_sq = m2;
            self.initialized = true;
        }
    }

    pub fn std(&self) -> f64 {
        (self.mean_sq - self.mean * self.mean).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    /// Intensity α ≥ 0: the largest exploration reward in min-max mode.
    pub alpha: f64,
    /// Attenuation γ > 0 of the decay factor `γ/(γ+n)`.
    pub gamma: f64,
    /// Number of policy updates so far.
    pub step: u64,
    pub mode: NoveltyMode,
    pub running: RunningStd,
}

impl Default for ExplorationSchedule {
    fn default() -> Self {
        ExplorationSchedule {
            alpha: 0.5,
            gamma: 40.0,
            step: 0,
            mode: NoveltyMode::MinmaxDecay,
            running: RunningStd::new(0.99),
        }
    }
}

impl ExplorationSchedule {
    pub fn decay_factor(&self) -> f64 {
        self.gamma / (self.gamma + self.step as f64)
    }

    pub fn advance(&mut self) {
        self.step += 1;
    }

    pub(crate) fn to_scalars(&self) -> Vec<f64> {
        vec![
            self.alpha,
            self.gamma,
            self.step as f64,
            match self.mode {
                NoveltyMode::RndStd => 0.0,
                NoveltyMode::MinmaxDecay => 1.0,
            },
            self.running.momentum,
            self.running.mean,
            self.running.mean_sq,
            if self.running.initialized { 1.0 } else { 0.0 },
        ]
    }

    pub(crate) fn from_scalars(s: &[f64]) -> Option<Self> {
        let [alpha, gamma, step, mode, momentum, mean, mean_sq, init] = <[f64; 8]>::try_from(s).ok()?;
        Some(ExplorationSchedule {
            alpha,
            gamma,
            step: step as u64,
            mode: if mode == 0.0 {
                NoveltyMode::RndStd
            } else {
                NoveltyMode::MinmaxDecay
            },
            running: RunningStd {
                momentum,
                mean,
                mean_sq,
                initialized: init != 0.0,
            },
        })
    }
}

/// Exploration reward breakdown for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoveltyRecord {
    pub problem_id: u64,
    /// Position of the trajectory in the batch.
    pub index: usize,
    /// `r(q,o)`: squared predictor/target disagreement.
    pub raw: f64,
    /// `R*₁`: normalized novelty.
    pub normalized: f64,
    /// `R*₂`: zero for correct trajectories.
    pub conditioned: f64,
    /// `R*`: decayed reward added to the advantages.
    pub reward: f64,
}

/// One scored sequence for the novelty networks.
#[derive(Debug, Clone, Copy)]
pub struct ExploreSample<'a> {
    pub problem_id: u64,
    pub question: &'a [Token],
    pub response: &'a [Token],
    pub correct: bool,
}

/// Turns raw errors into exploration rewards: normalize, gate by
/// incorrectness, then decay.
pub fn allocate(
    raw: &[f64],
    samples: &[ExploreSample<'_>],
    schedule: &mut ExplorationSchedule,
    phase: Phase,
) -> Vec<NoveltyRecord> {
    debug_assert_eq!(raw.len(), samples.len());
    let normalized: Vec<f64> = match schedule.mode {
        NoveltyMode::MinmaxDecay => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            raw.iter()
                .map(|r| {
                    if span > 0.0 {
                        (schedule.alpha * ((r - lo) / span)).clamp(0.0, schedule.alpha)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        NoveltyMode::RndStd => {
            if phase == Phase::Train {
                schedule.running.update(raw);
            }
            let std = schedule.running.std();
            raw.iter()
                .map(|r| if std > 0.0 { r / std } else { 0.0 })
                .collect()
        }
    };
    let decay = schedule.decay_factor();
    samples
        .iter()
        .zip(raw.iter().zip(normalized))
        .enumerate()
        .map(|(index, (s, (&raw, normalized)))| {
            let conditioned = if s.correct { 0.0 } else { normalized };
            NoveltyRecord {
                problem_id: s.problem_id,
                index,
                raw,
                normalized,
                conditioned,
                reward: decay * conditioned,
            }
        })
        .collect()
}

/// Scores a batch with the current networks. Call after the predictor update
/// for the batch.
pub fn exploration_reward(
    nets: &ExplorationNets,
    schedule: &mut ExplorationSchedule,
    batch: &[ExploreSample<'_>],
    phase: Phase,
) -> Result<Vec<NoveltyRecord>> {
    let raw = batch
        .iter()
        .map(|s| nets.novelty_raw(s.question, s.response))
        .collect::<Result<Vec<f64>>>()?;
    Ok(allocate(&raw, batch, schedule, phase))
}

/// `Â_new = Â_old + R*`. PPO adds to the last token of each trajectory,
/// GRPO to every token. Rows with `R* = 0` are copied unchanged.
pub fn inject(advantages_old: &[Vec<f64>], records: &[NoveltyRecord], algo: Algo) -> Result<Vec<Vec<f64>>> {
    if advantages_old.len() != records.len() {
        return Err(Error::Shape(format!(
            "{} advantage rows for {} novelty records",
            advantages_old.len(),
            records.len()
        )));
    }
    advantages_old
        .iter()
        .zip(records)
        .enumerate()
        .map(|(i, (row, rec))| {
            if rec.index != i {
                return Err(Error::Shape(format!("record {} at position {i}", rec.index)));
            }
            let mut row = row.clone();
            if rec.reward != 0.0 {
                match algo {
                    Algo::Ppo => {
                        if let Some(last) = row.last_mut() {
                            *last += rec.reward;
                        }
                    }
                    Algo::Grpo => row.iter_mut().for_each(|a| *a += rec.reward),
                }
            }
            Ok(row)
        })
        .collect()
}
