use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GenerationConfig, PolicyParams, Trajectory};
use crate::toytask::Token;

/// Activations of one forward step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    /// tanh activations.
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub value: f64,
}

/// A read-only parameter snapshot with the first-layer products
/// `W1[:, j] · emb[v]` precomputed for every window position `j` and token
/// `v`. Safe to share across sampling threads.
#[derive(Debug, Clone)]
pub struct CompiledPolicy {
    params: PolicyParams,
    /// `[window][vocab][hidden]`
    proj: Vec<f64>,
}

impl CompiledPolicy {
    pub fn new(params: &PolicyParams) -> Self {
        let s = *params.shape();
        let l = params.layout();
        let d = params.as_slice();
        let input = s.input();
        let mut proj = vec![0.0; s.window * s.vocab * s.hidden];
        for j in 0..s.window {
            for v in 0..s.vocab {
                let emb = &d[l.emb + v * s.embed..l.emb + (v + 1) * s.embed];
                let out = &mut proj[(j * s.vocab + v) * s.hidden..(j * s.vocab + v + 1) * s.hidden];
                for (h, o) in out.iter_mut().enumerate() {
                    let row = &d[l.w1 + h * input + j * s.embed..l.w1 + h * input + (j + 1) * s.embed];
                    *o = row.iter().zip(emb).map(|(w, e)| w * e).sum();
                }
            }
        }
        CompiledPolicy {
            params: params.clone(),
            proj,
        }
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    /// The `window` context tokens ending at the end of `seq`.
    pub(crate) fn context(&self, seq: &[Token], out: &mut Vec<Token>) {
        let s = self.params.shape();
        out.clear();
        let pad = Token::new(s.pad);
        let missing = s.window.saturating_sub(seq.len());
        out.extend(std::iter::repeat_n(pad, missing));
        out.extend_from_slice(&seq[seq.len() - (s.window - missing)..]);
    }

    pub fn forward(&self, context: &[Token]) -> StepOutput {
        let s = self.params.shape();
        let l = self.params.layout();
        let d = self.params.as_slice();
        debug_assert_eq!(context.len(), s.window);
        let mut hidden = d[l.b1..l.b1 + s.hidden].to_vec();
        for (j, tok) in context.iter().enumerate() {
            let p = &self.proj[(j * s.vocab + tok.index()) * s.hidden..][..s.hidden];
            for (h, x) in hidden.iter_mut().zip(p) {
                *h += x;
            }
        }
        for h in &mut hidden {
            *h = h.tanh();
        }
        let logits = (0..s.vocab)
            .map(|v| {
                let row = &d[l.wo + v * s.hidden..l.wo + (v + 1) * s.hidden];
                d[l.bo + v] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect();
        let value = d[l.bv]
            + d[l.wv..l.wv + s.hidden]
                .iter()
                .zip(&hidden)
                .map(|(w, h)| w * h)
                .sum::<f64>();
        StepOutput {
            hidden,
            logits,
            value,
        }
    }

    pub fn sample(&self, question: &[Token], gen: &GenerationConfig) -> Trajectory {
        let s = self.params.shape();
        let eos = Token::new(s.eos);
        let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
        let mut seq = question.to_vec();
        let mut ctx = Vec::with_capacity(s.window);
        let mut response = Vec::new();
        let mut logprobs = Vec::new();
        while response.len() < gen.max_len {
            self.context(&seq, &mut ctx);
            let out = self.forward(&ctx);
            let logp = log_softmax(&out.logits, gen.temperature);
            let tok = if gen.greedy {
                argmax(&logp)
            } else {
                draw(&logp, rng.random::<f64>())
            };
            let token = Token::new(tok as u8);
            response.push(token);
            logprobs.push(logp[tok]);
            seq.push(token);
            if token == eos {
                break;
            }
        }
        Trajectory {
            problem_id: 0,
            question: question.to_vec(),
            response,
            logprobs_old: logprobs,
            outcome: None,
        }
    }

    /// Per-token log-probabilities of the response and value estimates for
    /// every prefix state `[q, o_<t]`, plus one value after the last token.
    pub fn logprob_and_value(
        &self,
        question: &[Token],
        response: &[Token],
        temperature: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let mut seq = question.to_vec();
        let mut ctx = Vec::new();
        let mut logprobs = Vec::with_capacity(response.len());
        let mut values = Vec::with_capacity(response.len() + 1);
        for tok in response {
            self.context(&seq, &mut ctx);
            let out = self.forward(&ctx);
            logprobs.push(log_softmax(&out.logits, temperature)[tok.index()]);
            values.push(out.value);
            seq.push(*tok);
        }
        self.context(&seq, &mut ctx);
        values.push(self.forward(&ctx).value);
        (logprobs, values)
    }
}

/// `log softmax(logits / temperature)`.
pub(crate) fn log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|x| (x - max) / temperature).collect();
    let lse = scaled.iter().map(|x| x.exp()).sum::<f64>().ln();
    scaled.into_iter().map(|x| x - lse).collect()
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw; `u` in [0, 1).
fn draw(logp: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, lp) in logp.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last = i;
        }
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

pub fn sample(params: &PolicyParams, question: &[Token], gen: &GenerationConfig) -> Trajectory {
    CompiledPolicy::new(params).sample(question, gen)
}

pub fn logprob_and_value(
    params: &PolicyParams,
    trajectory: &Trajectory,
    temperature: f64,
) -> (Vec<f64>, Vec<f64>) {
    CompiledPolicy::new(params).logprob_and_value(
        &trajectory.question,
        &trajectory.response,
        temperature,
    )
}
