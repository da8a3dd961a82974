//! Reverse-mode gradient of the clipped surrogate loss.
//!
//! Loss minimized (the negated objective):
//!
//! ```text
//! L = 1/N Σ_i 1/|o_i| Σ_t [ -min(w·A, clip(w, 1-ε, 1+ε)·A) + β·KL_t + c_v·(V_t - R_t)² ]
//! ```
//!
//! with `w = exp(logπ − logπ_old)` and the per-token KL estimator
//! `KL_t = π_ref/π − log(π_ref/π) − 1`. `N` counts non-empty responses.

use serde::{Deserialize, Serialize};

use super::forward::log_softmax;
use super::{PolicyParams, Trajectory};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub temperature: f64,
    /// Weight of the squared value error; only used with value targets.
    pub value_coef: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            clip_eps: 0.2,
            kl_beta: 0.0,
            temperature: 1.0,
            value_coef: 0.5,
        }
    }
}

/// Per-token return targets for the value head (PPO).
pub type ValueTargets<'a> = &'a [Vec<f64>];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub kl: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub tokens: usize,
}

fn check_aligned(name: &str, batch: &[Trajectory], rows: &[Vec<f64>]) -> Result<()> {
    if rows.len() != batch.len() {
        return Err(Error::Shape(format!(
            "{name}: {} rows for {} trajectories",
            rows.len(),
            batch.len()
        )));
    }
    for (i, (t, r)) in batch.iter().zip(rows).enumerate() {
        if r.len() != t.response.len() {
            return Err(Error::Shape(format!(
                "{name}: row {i} has {} entries, response has {} tokens",
                r.len(),
                t.response.len()
            )));
        }
        if t.logprobs_old.len() != t.response.len() {
            return Err(Error::Shape(format!(
                "trajectory {i}: {} old logprobs for {} tokens",
                t.logprobs_old.len(),
                t.response.len()
            )));
        }
    }
    Ok(())
}

/// Gradient of the mean clipped-surrogate loss with respect to every
/// parameter, plus the loss itself.
pub fn gradients(
    params: &PolicyParams,
    batch: &[Trajectory],
    advantages: &[Vec<f64>],
    cfg: &LossConfig,
    reference: Option<&PolicyParams>,
    value_targets: Option<ValueTargets<'_>>,
) -> Result<(PolicyParams, LossStats)> {
    check_aligned("advantages", batch, advantages)?;
    if let Some(v) = value_targets {
        check_aligned("value targets", batch, v)?;
    }
    if !(cfg.clip_eps > 0.0 && cfg.clip_eps < 1.0) {
        return Err(Error::config("policy.clip_eps", "must be in (0, 1)"));
    }
    if !(cfg.kl_beta >= 0.0) {
        return Err(Error::config("policy.kl_beta", "must be non-negative"));
    }
    let reference = if cfg.kl_beta > 0.0 {
        let r = reference.ok_or_else(|| {
            Error::Contract("kl_beta > 0 requires reference parameters".into())
        })?;
        if r.shape() != params.shape() {
            return Err(Error::Shape("reference shape differs from policy".into()));
        }
        Some(r.compile())
    } else {
        None
    };

    let s = *params.shape();
    let l = params.layout();
    let d = params.as_slice();
    let policy = params.compile();
    let mut grad = PolicyParams::zeros(s);
    let mut dproj = vec![0.0; s.window * s.vocab * s.hidden];
    let mut touched = vec![false; s.window * s.vocab];
    let mut stats = LossStats::default();
    let mut clipped = 0usize;

    let n = batch.iter().filter(|t| !t.response.is_empty()).count();
    let mut ctx = Vec::with_capacity(s.window);
    let mut dlogits = vec![0.0; s.vocab];
    let mut dh = vec![0.0; s.hidden];

    for (i, traj) in batch.iter().enumerate() {
        if traj.response.is_empty() {
            continue;
        }
        let weight = 1.0 / (n as f64 * traj.response.len() as f64);
        let mut seq = traj.question.clone();
        for (t, tok) in traj.response.iter().enumerate() {
            policy.context(&seq, &mut ctx);
            let out = policy.forward(&ctx);
            let logp = log_softmax(&out.logits, cfg.temperature);
            let k = tok.index();
            let lp = logp[k];
            let ratio = (lp - traj.logprobs_old[t]).exp();
            let adv = advantages[i][t];
            let unclipped = ratio * adv;
            let clipped_ratio = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            let surr_clipped = clipped_ratio * adv;
            if clipped_ratio != ratio {
                clipped += 1;
            }
            let (surr, dsurr) = if unclipped <= surr_clipped {
                (unclipped, unclipped)
            } else {
                (surr_clipped, 0.0)
            };
            let mut dlp = -dsurr;
            let mut token_loss = -surr;
            stats.policy_loss += weight * -surr;
            if let Some(r) = &reference {
                let ref_out = r.forward(&ctx);
                let x = log_softmax(&ref_out.logits, cfg.temperature)[k] - lp;
                let kl = x.exp() - x - 1.0;
                token_loss += cfg.kl_beta * kl;
                stats.kl += weight * kl;
                dlp += cfg.kl_beta * (1.0 - x.exp());
            }
            let mut dv = 0.0;
            if let Some(v) = value_targets {
                let err = out.value - v[i][t];
                token_loss += cfg.value_coef * err * err;
                stats.value_loss += weight * err * err;
                dv = weight * cfg.value_coef * 2.0 * err;
            }
            stats.loss += weight * token_loss;
            let dlp = weight * dlp;

            // logits
            for (v, g) in dlogits.iter_mut().enumerate() {
                let onehot = if v == k { 1.0 } else { 0.0 };
                *g = dlp * (onehot - logp[v].exp()) / cfg.temperature;
            }
            let gd = grad.as_mut_slice();
            dh.iter_mut().for_each(|x| *x = 0.0);
            for (v, g) in dlogits.iter().enumerate() {
                gd[l.bo + v] += g;
                let row = l.wo + v * s.hidden;
                for h in 0..s.hidden {
                    gd[row + h] += g * out.hidden[h];
                    dh[h] += g * d[row + h];
                }
            }
            if dv != 0.0 {
                gd[l.bv] += dv;
                for h in 0..s.hidden {
                    gd[l.wv + h] += dv * out.hidden[h];
                    dh[h] += dv * d[l.wv + h];
                }
            }
            // tanh
            for h in 0..s.hidden {
                dh[h] *= 1.0 - out.hidden[h] * out.hidden[h];
                gd[l.b1 + h] += dh[h];
            }
            for (j, c) in ctx.iter().enumerate() {
                let slot = j * s.vocab + c.index();
                touched[slot] = true;
                for (acc, g) in dproj[slot * s.hidden..(slot + 1) * s.hidden].iter_mut().zip(&dh) {
                    *acc += g;
                }
            }
            seq.push(*tok);
        }
        stats.tokens += traj.response.len();
    }

    // proj[j][v][h] = Σ_e W1[h][j*E+e] · emb[v][e]
    let input = s.input();
    let gd = grad.as_mut_slice();
    for j in 0..s.window {
        for v in 0..s.vocab {
            let slot = j * s.vocab + v;
            if !touched[slot] {
                continue;
            }
            let gp = &dproj[slot * s.hidden..(slot + 1) * s.hidden];
            for (h, g) in gp.iter().enumerate() {
                if *g == 0.0 {
                    continue;
                }
                let w_row = l.w1 + h * input + j * s.embed;
                for e in 0..s.embed {
                    gd[w_row + e] += g * d[l.emb + v * s.embed + e];
                    gd[l.emb + v * s.embed + e] += g * d[w_row + e];
                }
            }
        }
    }
    stats.clip_fraction = if stats.tokens > 0 {
        clipped as f64 / stats.tokens as f64
    } else {
        0.0
    };
    Ok((grad, stats))
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::policy::{GenerationConfig, PolicyShape};
    use crate::toytask::Token;

    fn tiny() -> PolicyShape {
        PolicyShape {
            vocab: 2,
            embed: 3,
            window: 2,
            hidden: 4,
            pad: 0,
            eos: 1,
        }
    }

    fn random_params(shape: PolicyShape, seed: u64, scale: f64) -> PolicyParams {
        let mut p = PolicyParams::zeros(shape);
        let mut rng = crate::rng::stream(seed, &[7]);
        for x in p.as_mut_slice() {
            *x = rng.random_range(-scale..scale);
        }
        p
    }

    fn traj(resp: &[u8], old: &[f64]) -> Trajectory {
        Trajectory {
            problem_id: 0,
            question: vec![Token::new(0), Token::new(1)],
            response: resp.iter().map(|t| Token::new(*t)).collect(),
            logprobs_old: old.to_vec(),
            outcome: None,
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = random_params(tiny(), 1, 0.5);
        let b = vec![traj(&[0, 1], &[-0.5, -0.5])];
        let err = gradients(&p, &b, &[vec![1.0]], &LossConfig::default(), None, None);
        assert!(matches!(err, Err(Error::Shape(_))));
        let err = gradients(&p, &b, &[], &LossConfig::default(), None, None);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn beta_zero_ignores_reference() {
        let p = random_params(tiny(), 2, 0.5);
        let r = random_params(tiny(), 3, 0.5);
        let b = vec![traj(&[0, 0, 1], &[-0.6, -0.7, -0.8])];
        let adv = vec![vec![0.5, -1.0, 2.0]];
        let cfg = LossConfig::default();
        let (g1, _) = gradients(&p, &b, &adv, &cfg, None, None).unwrap();
        let (g2, _) = gradients(&p, &b, &adv, &cfg, Some(&r), None).unwrap();
        assert_eq!(g1, g2);
        let kl = LossConfig {
            kl_beta: 0.1,
            ..cfg
        };
        assert!(gradients(&p, &b, &adv, &kl, None, None).is_err());
    }

    #[test]
    fn empty_responses_are_excluded() {
        let p = random_params(tiny(), 4, 0.5);
        let full = vec![traj(&[0, 1], &[-0.5, -0.9])];
        let with_empty = vec![full[0].clone(), traj(&[], &[])];
        let cfg = LossConfig::default();
        let (g1, s1) = gradients(&p, &full, &[vec![1.0, 1.0]], &cfg, None, None).unwrap();
        let (g2, s2) =
            gradients(&p, &with_empty, &[vec![1.0, 1.0], vec![]], &cfg, None, None).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn clipped_token_contributes_no_gradient() {
        // old logprob far below current → ratio >> 1+ε; with A > 0 the
        // surrogate is the constant (1+ε)·A.
        let p = random_params(tiny(), 5, 0.5);
        let (lp, _) = p.compile().logprob_and_value(&[Token::new(0)], &[Token::new(1)], 1.0);
        let b = vec![Trajectory {
            question: vec![Token::new(0)],
            ..traj(&[1], &[lp[0] - 1.0])
        }];
        let (g, stats) =
            gradients(&p, &b, &[vec![1.5]], &LossConfig::default(), None, None).unwrap();
        assert!(g.as_slice().iter().all(|x| *x == 0.0));
        assert!((stats.loss + 1.2 * 1.5).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 1.0);
        // negative advantage on the same token is not clipped away
        let (g, _) = gradients(&p, &b, &[vec![-1.5]], &LossConfig::default(), None, None).unwrap();
        assert!(g.as_slice().iter().any(|x| *x != 0.0));
    }

    #[test]
    fn sampled_rollout_has_ratio_one() {
        let shape = PolicyShape {
            vocab: 5,
            embed: 4,
            window: 3,
            hidden: 6,
            pad: 0,
            eos: 4,
        };
        let p = random_params(shape, 6, 0.8);
        let gen = GenerationConfig {
            seed: 3,
            max_len: 6,
            ..Default::default()
        };
        let t = p.compile().sample(&[Token::new(1), Token::new(2)], &gen);
        let adv = vec![vec![0.7; t.response.len()]];
        let (_, stats) = gradients(&p, &[t], &adv, &LossConfig::default(), None, None).unwrap();
        assert!((stats.policy_loss + 0.7).abs() < 1e-12);
        assert_eq!(stats.clip_fraction, 0.0);
    }
}
