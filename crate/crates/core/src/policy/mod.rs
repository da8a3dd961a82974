//! Fixed-window MLP token policy with a value head.
//!
//! The context is the last `window` tokens of `question ++ response_prefix`,
//! left-padded with the pad token. Each position has its own block of the
//! hidden layer, so the hidden pre-activation is
//! `b1 + sum_j W1[:, j] · emb[tok_j]`. [`CompiledPolicy`] caches the products
//! `W1[:, j] · emb[v]` for every (position, token) pair, which makes a
//! forward step O(window · hidden + hidden · vocab).

mod forward;
mod grad;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::toytask::{OutcomeLabel, Token};

pub use forward::{logprob_and_value, sample, CompiledPolicy, StepOutput};
pub use grad::{gradients, LossConfig, LossStats, ValueTargets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub vocab: usize,
    pub embed: usize,
    pub window: usize,
    pub hidden: usize,
    /// Token used to left-pad short contexts.
    pub pad: u8,
    /// Token that ends a response.
    pub eos: u8,
}

impl PolicyShape {
    pub fn input(&self) -> usize {
        self.window * self.embed
    }

    pub fn len(&self) -> usize {
        let l = self.layout();
        l.bv + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn layout(&self) -> Layout {
        let emb = 0;
        let w1 = emb + self.vocab * self.embed;
        let b1 = w1 + self.hidden * self.input();
        let wo = b1 + self.hidden;
        let bo = wo + self.vocab * self.hidden;
        let wv = bo + self.vocab;
        let bv = wv + self.hidden;
        Layout {
            emb,
            w1,
            b1,
            wo,
            bo,
            wv,
            bv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.vocab > 64 {
            return Err(Error::config("policy.vocab", "must be in 2..=64"));
        }
        if self.embed == 0 {
            return Err(Error::config("policy.embed_dim", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("policy.window", "must be positive"));
        }
        if self.hidden == 0 {
            return Err(Error::config("policy.hidden", "must be positive"));
        }
        if self.pad as usize >= self.vocab || self.eos as usize >= self.vocab {
            return Err(Error::config("policy.vocab", "pad/eos token outside vocabulary"));
        }
        Ok(())
    }
}

/// Offsets of each parameter group in the flat array, in declared order.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub emb: usize,
    pub w1: usize,
    pub b1: usize,
    pub wo: usize,
    pub bo: usize,
    pub wv: usize,
    pub bv: usize,
}

/// Named parameter groups, in checkpoint order.
pub const PARAM_GROUPS: [&str; 7] = [
    "embedding",
    "hidden.weight",
    "hidden.bias",
    "output.weight",
    "output.bias",
    "value.weight",
    "value.bias",
];

/// Flat parameter vector plus its shape. Gradients use the same type.
///
/// Layout (row-major): embedding `[vocab][embed]`, hidden weight
/// `[hidden][window*embed]`, hidden bias `[hidden]`, output weight
/// `[vocab][hidden]`, output bias `[vocab]`, value weight `[hidden]`,
/// value bias `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    shape: PolicyShape,
    data: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: PolicyShape) -> Self {
        PolicyParams {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    /// Embedding and hidden weights uniform in [-0.05, 0.05]; biases, output
    /// projection and value head zero, so the initial policy is uniform.
    pub fn init(shape: PolicyShape, seed: u64) -> Self {
        let mut p = Self::zeros(shape);
        let l = shape.layout();
        let mut rng = rng::stream(seed, &[rng::tag::POLICY_INIT]);
        for x in &mut p.data[l.emb..l.b1] {
            *x = rng.random_range(-0.05..=0.05);
        }
        p
    }

    pub fn from_vec(shape: PolicyShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(PolicyParams { shape, data })
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// The slice of one named group.
    pub fn group(&self, index: usize) -> &[f64] {
        let r = self.group_range(index);
        &self.data[r]
    }

    pub fn group_mut(&mut self, index: usize) -> &mut [f64] {
        let r = self.group_range(index);
        &mut self.data[r]
    }

    pub(crate) fn group_range(&self, index: usize) -> std::ops::Range<usize> {
        let l = self.shape.layout();
        let bounds = [l.emb, l.w1, l.b1, l.wo, l.bo, l.wv, l.bv, l.bv + 1];
        bounds[index]..bounds[index + 1]
    }

    pub(crate) fn layout(&self) -> Layout {
        self.shape.layout()
    }

    pub fn compile(&self) -> CompiledPolicy {
        CompiledPolicy::new(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_len: usize,
    pub seed: u64,
    /// Zero-temperature limit: always take the argmax token.
    pub greedy: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: 1.0,
            max_len: 64,
            seed: 0,
            greedy: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("policy.temperature", "must be a positive finite number"));
        }
        if self.max_len == 0 {
            return Err(Error::config("policy.max_len", "must be at least 1"));
        }
        Ok(())
    }
}

/// A sampled response to one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem_id: u64,
    pub question: Vec<Token>,
    pub response: Vec<Token>,
    /// Log-probabilities of each response token under the sampling
    /// distribution (temperature included).
    pub logprobs_old: Vec<f64>,
    pub outcome: Option<OutcomeLabel>,
}


const POLICY_MAGIC: &[u8; 8] = b"NVRLPOL\0";
const VALUE_MAGIC: &[u8; 8] = b"NVRLVAL\0";

impl PolicyParams {
    fn header(&self) -> Vec<u32> {
        let s = self.shape;
        // vocab, embed, window, number of hidden layers, hidden sizes, pad, eos
        vec![
            s.vocab as u32,
            s.embed as u32,
            s.window as u32,
            1,
            s.hidden as u32,
            s.pad as u32,
            s.eos as u32,
        ]
    }

    fn shape_from_header(h: &[u32], path: &std::path::Path) -> Result<PolicyShape> {
        if h.len() != 7 || h[3] != 1 {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: "unexpected policy header".into(),
            });
        }
        let shape = PolicyShape {
            vocab: h[0] as usize,
            embed: h[1] as usize,
            window: h[2] as usize,
            hidden: h[4] as usize,
            pad: h[5] as u8,
            eos: h[6] as u8,
        };
        shape.validate()?;
        Ok(shape)
    }

    pub fn to_container(&self) -> crate::checkpoint::Container {
        crate::checkpoint::Container {
            magic: *POLICY_MAGIC,
            header: self.header(),
            arrays: (0..PARAM_GROUPS.len()).map(|g| self.group(g).to_vec()).collect(),
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.to_container().save(path)
    }

    /// Value head only, same header, arrays `value.weight` and `value.bias`.
    pub fn save_value_head(&self, path: &std::path::Path) -> Result<()> {
        crate::checkpoint::Container {
            magic: *VALUE_MAGIC,
            header: self.header(),
            arrays: vec![self.group(5).to_vec(), self.group(6).to_vec()],
        }
        .save(path)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let c = crate::checkpoint::Container::load(path)?;
        c.expect_magic(POLICY_MAGIC, path)?;
        let shape = Self::shape_from_header(&c.header, path)?;
        let mut p = Self::zeros(shape);
        if c.arrays.len() != PARAM_GROUPS.len() {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!("expected {} arrays, found {}", PARAM_GROUPS.len(), c.arrays.len()),
            });
        }
        for (g, a) in c.arrays.iter().enumerate() {
            let dst = p.group_mut(g);
            if dst.len() != a.len() {
                return Err(Error::Checkpoint {
                    path: path.to_path_buf(),
                    reason: format!("array `{}` has wrong length", PARAM_GROUPS[g]),
                });
            }
            dst.copy_from_slice(a);
        }
        Ok(p)
    }
}
