use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::policy::{CompiledPolicy, GenerationConfig};
use crate::rng;
use crate::toytask::{verify, Problem, Vocabulary};

/// Accuracy from `k` samples per problem. Only fully correct responses
/// count; the format reward is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub k: usize,
    /// `pass_at[j]`: fraction of problems solved within the first `j+1`
    /// samples.
    pub pass_at: Vec<f64>,
    /// Mean per-sample accuracy.
    pub avg_at_k: f64,
}

impl EvalMetrics {
    pub fn pass_at_1(&self) -> f64 {
        self.pass_at[0]
    }

    pub fn pass_at_k(&self) -> f64 {
        self.pass_at[self.k - 1]
    }

    /// `{"pass@1": .., "pass@k": .., "avg@k": ..}`.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("pass@1".into(), Value::from(self.pass_at_1()));
        m.insert(format!("pass@{}", self.k), Value::from(self.pass_at_k()));
        m.insert(format!("avg@{}", self.k), Value::from(self.avg_at_k));
        Value::Object(m)
    }
}

/// Per-problem correctness flags for `k` samples each.
pub fn sample_correctness(
    policy: &CompiledPolicy,
    problems: &[Problem],
    gen: &GenerationConfig,
    k: usize,
    vocab: &Vocabulary,
) -> Vec<Vec<bool>> {
    problems
        .par_iter()
        .map(|p| {
            let q = p.question_tokens(vocab);
            (0..k)
                .map(|j| {
                    let g = GenerationConfig {
                        seed: rng::derive(gen.seed, &[rng::tag::EVAL, p.id, j as u64]),
                        ..*gen
                    };
                    let t = policy.sample(&q, &g);
                    verify(&t.response, p, vocab).correct
                })
                .collect()
        })
        .collect()
}

pub fn metrics_from_correctness(flags: &[Vec<bool>], k: usize) -> EvalMetrics {
    assert!(k >= 1);
    let n = flags.len().max(1) as f64;
    let pass_at = (1..=k)
        .map(|j| flags.iter().filter(|f| f[..j].iter().any(|c| *c)).count() as f64 / n)
        .collect();
    let avg_at_k = flags
        .iter()
        .map(|f| f[..k].iter().filter(|c| **c).count() as f64 / k as f64)
        .sum::<f64>()
        / n;
    EvalMetrics {
        k,
        pass_at,
        avg_at_k,
    }
}

pub fn evaluate(
    policy: &CompiledPolicy,
    problems: &[Problem],
    gen: &GenerationConfig,
    k: usize,
    vocab: &Vocabulary,
) -> EvalMetrics {
    let flags = sample_correctness(policy, problems, gen, k, vocab);
    metrics_from_correctness(&flags, k)
}
