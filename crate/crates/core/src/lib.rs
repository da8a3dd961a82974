//! Reinforcement learning for small autoregressive token policies with
//! sequence-level novelty exploration.
//!
//! The crate is split into:
//!
//! - [`toytask`]: Countdown-style arithmetic problems, tokenization and the
//!   outcome verifier.
//! - [`policy`]: a fixed-window MLP token policy with a value head and
//!   hand-written reverse-mode gradients of the clipped surrogate.
//! - [`advantage`]: group-relative normalization (GRPO) and GAE (PPO).
//! - [`explore`]: predictor/target novelty networks, error-conditioned
//!   reward allocation, decay scheduling and advantage injection.
//! - [`trainer`]: the training loop, evaluation, metric logs and the
//!   exploration diagnostic.

pub mod advantage;
pub mod checkpoint;
pub mod error;
pub mod explore;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod toytask;
pub mod trainer;

pub use error::{Error, Result};
