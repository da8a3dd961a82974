//! Sequence-level novelty exploration.
//!
//! A frozen, randomly initialized target network and a trainable predictor
//! with the same architecture each map a whole `(question, response)`
//! sequence to one scalar. The predictor is regressed onto the target over
//! the sequences seen in training; its squared error is small on familiar
//! sequences and large on rare ones, and serves as the novelty signal.

mod nets;
mod reward;

pub use nets::{ExplorationNets, NetParams, NetShape, NET_EMBED, NET_WIDTHS};
pub use reward::{
    allocate, exploration_reward, inject, ExplorationSchedule, ExploreSample, NoveltyMode,
    NoveltyRecord, Phase, RunningStd,
};

use std::path::Path;

use crate::checkpoint::Container;
use crate::error::{Error, Result};

/// Saves the networks and the schedule scalars (α, γ, n, mode, running std)
/// in one checkpoint file.
pub fn save_state(path: &Path, nets: &ExplorationNets, schedule: &ExplorationSchedule) -> Result<()> {
    nets.to_container(schedule.to_scalars()).save(path)
}

pub fn load_state(path: &Path) -> Result<(ExplorationNets, ExplorationSchedule)> {
    let c = Container::load(path)?;
    let (nets, scalars) = ExplorationNets::from_container(&c, path)?;
    let schedule = ExplorationSchedule::from_scalars(&scalars).ok_or_else(|| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: "bad schedule scalars".into(),
    })?;
    Ok((nets, schedule))
}
