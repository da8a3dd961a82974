//! Training configuration. Serialized as TOML with one table per section.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::advantage::{Algo, GaeConfig};
use crate::error::{Error, Result};
use crate::explore::NoveltyMode;
use crate::optim::OptimizerKind;
use crate::policy::{GenerationConfig, LossConfig, PolicyShape};
use crate::toytask::Vocabulary;

use super::WarmStartConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub algo: Algo,
    /// Inject exploration rewards into the advantages.
    pub imagine: bool,
    pub steps: u64,
    /// Problems per step (the reference setup used 512).
    pub batch_size: usize,
    /// Rollouts per problem for GRPO (reference: 5). PPO always uses 1.
    pub group_size: usize,
    pub seed: u64,
    /// Evaluate and checkpoint every this many steps (and after the last).
    pub eval_interval: u64,
    /// Samples per test problem during periodic evaluation.
    pub eval_k: usize,
    /// Evaluate on the first N test problems; 0 means all.
    pub eval_problems: usize,
    /// Policy updates per rollout batch.
    pub inner_epochs: usize,
    /// Keep training the novelty predictor (and logging its loss) when
    /// `imagine` is off. It never touches the policy.
    pub track_novelty: bool,
    /// Verify advantage invariants every step and abort on violation.
    pub check_invariants: bool,
    /// Log elapsed seconds per row. Off by default so logs are reproducible
    /// byte for byte.
    pub record_wall_clock: bool,
    /// Worker threads for rollouts; 0 uses the global pool.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            algo: Algo::Grpo,
            imagine: true,
            steps: 300,
            batch_size: 64,
            group_size: 5,
            seed: 0,
            eval_interval: 50,
            eval_k: 4,
            eval_problems: 0,
            inner_epochs: 1,
            track_novelty: true,
            check_invariants: false,
            record_wall_clock: false,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Where logs and checkpoints go.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub window: usize,
    pub hidden: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub temperature: f64,
    /// Longest response in tokens (reference setup: 1024).
    pub max_len: usize,
    pub value_coef: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            embed_dim: 32,
            window: 16,
            hidden: 128,
            optimizer: OptimizerKind::Adam,
            lr: 3e-3,
            clip_eps: 0.2,
            kl_beta: 0.0,
            temperature: 1.0,
            max_len: 64,
            value_coef: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub mode: NoveltyMode,
    pub momentum: f64,
    pub lr: f64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            alpha: 0.5,
            gamma: 40.0,
            mode: NoveltyMode::MinmaxDecay,
            momentum: 0.99,
            lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub run: RunConfig,
    pub data: DataConfig,
    pub policy: PolicyConfig,
    pub gae: GaeConfig,
    pub explore: ExploreConfig,
    pub warmstart: WarmStartConfig,
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("config")
                .to_string();
            Error::config(key, e.message().trim().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `section.key=value` override, parsing the value as TOML
    /// (bare words are taken as strings).
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "expected section.key=value"))?;
        let path = path.trim();
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::config(path, "expected section.key"))?;
        let raw = raw.trim();
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("own toml parses");
        let table = doc
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::config(path, "not a section"))?;
        table.insert(key.to_string(), value);
        let updated = toml::to_string(&doc).expect("table serializes");
        let parsed: TrainConfig = toml::from_str(&updated)
            .map_err(|e| Error::config(path, e.message().trim().to_string()))?;
        *self = parsed;
        Ok(())
    }

    /// Every `section.key` with its default, in file order. Unset optional
    /// keys are listed as `unset`.
    pub fn default_keys() -> Vec<(String, String)> {
        let doc: toml::Table = toml::from_str(&TrainConfig::default().to_toml()).expect("own toml parses");
        let mut keys = Vec::new();
        for (section, table) in &doc {
            for (key, value) in table.as_table().into_iter().flatten() {
                keys.push((format!("{section}.{key}"), value.to_string()));
            }
        }
        for key in ["data.train", "data.test", "data.out_dir"] {
            if !keys.iter().any(|(k, _)| k == key) {
                keys.push((key.to_string(), "unset".to_string()));
            }
        }
        keys
    }

    pub fn rollouts_per_problem(&self) -> usize {
        match self.run.algo {
            Algo::Ppo => 1,
            Algo::Grpo => self.run.group_size,
        }
    }

    pub fn policy_shape(&self, vocab: &Vocabulary) -> PolicyShape {
        PolicyShape {
            vocab: vocab.len(),
            embed: self.policy.embed_dim,
            window: self.policy.window,
            hidden: self.policy.hidden,
            pad: vocab.pad().id(),
            eos: vocab.eos().id(),
        }
    }

    pub fn generation(&self, seed: u64) -> GenerationConfig {
        GenerationConfig {
            temperature: self.policy.temperature,
            max_len: self.policy.max_len,
            seed,
            greedy: false,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            clip_eps: self.policy.clip_eps,
            kl_beta: self.policy.kl_beta,
            temperature: self.policy.temperature,
            value_coef: self.policy.value_coef,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.steps == 0 {
            return Err(Error::config("run.steps", "must be at least 1"));
        }
        if r.batch_size == 0 {
            return Err(Error::config("run.batch_size", "must be at least 1"));
        }
        if r.algo == Algo::Grpo && r.group_size < 2 {
            return Err(Error::config("run.group_size", "grpo needs at least 2 rollouts per problem"));
        }
        if r.eval_interval == 0 {
            return Err(Error::config("run.eval_interval", "must be at least 1"));
        }
        if r.eval_k == 0 {
            return Err(Error::config("run.eval_k", "must be at least 1"));
        }
        if r.inner_epochs == 0 {
            return Err(Error::config("run.inner_epochs", "must be at least 1"));
        }
        let p = &self.policy;
        self.policy_shape(&Vocabulary::standard()).validate()?;
        if !(p.lr > 0.0 && p.lr.is_finite()) {
            return Err(Error::config("policy.lr", "must be positive"));
        }
        if !(p.clip_eps > 0.0 && p.clip_eps < 1.0) {
            return Err(Error::config("policy.clip_eps", "must be in (0, 1)"));
        }
        if !(p.kl_beta >= 0.0 && p.kl_beta.is_finite()) {
            return Err(Error::config("policy.kl_beta", "must be non-negative"));
        }
        if !(p.value_coef >= 0.0 && p.value_coef.is_finite()) {
            return Err(Error::config("policy.value_coef", "must be non-negative"));
        }
        self.generation(0).validate()?;
        self.gae.validate()?;
        self.warmstart.validate()?;
        let e = &self.explore;
        if !(e.alpha >= 0.0 && e.alpha.is_finite()) {
            return Err(Error::config("explore.alpha", "must be non-negative"));
        }
        if !(e.gamma > 0.0 && e.gamma.is_finite()) {
            return Err(Error::config("explore.gamma", "must be positive"));
        }
        if !(0.0..1.0).contains(&e.momentum) {
            return Err(Error::config("explore.momentum", "must be in [0, 1)"));
        }
        if !(e.lr > 0.0 && e.lr.is_finite()) {
            return Err(Error::config("explore.lr", "must be positive"));
        }
        Ok(())
    }
}
