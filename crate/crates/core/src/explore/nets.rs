use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::error::{Error, Result};
use crate::rng;
use crate::toytask::Token;

pub const NET_EMBED: usize = 16;
/// Output widths of the three feed-forward layers.
pub const NET_WIDTHS: [usize; 3] = [16, 8, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub vocab: usize,
}

impl NetShape {
    fn offsets(&self) -> [usize; 8] {
        let [h1, h2, out] = NET_WIDTHS;
        let emb = 0;
        let w1 = emb + self.vocab * NET_EMBED;
        let b1 = w1 + h1 * NET_EMBED;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + out * h2;
        [emb, w1, b1, w2, b2, w3, b3, b3 + out]
    }

    pub fn len(&self) -> usize {
        self.offsets()[7]
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Flat parameters of one novelty network: embedding `[vocab][16]`,
/// then `(weight [out][in], bias [out])` for layers 16→16, 16→8, 8→1.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    shape: NetShape,
    data: Vec<f64>,
}

struct Activations {
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    y: f64,
}

impl NetParams {
    /// Embedding rows ~ N(0, 1); weights ~ N(0, 1/fan_in); biases zero.
    pub fn random(shape: NetShape, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[]);
        let mut data = vec![0.0; shape.len()];
        let o = shape.offsets();
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        for x in &mut data[o[0]..o[1]] {
            *x = unit.sample(&mut rng);
        }
        let fans = [NET_EMBED, NET_WIDTHS[0], NET_WIDTHS[1]];
        for (layer, fan_in) in fans.iter().enumerate() {
            let std = (1.0 / *fan_in as f64).sqrt();
            for x in &mut data[o[1 + 2 * layer]..o[2 + 2 * layer]] {
                *x = std * unit.sample(&mut rng);
            }
        }
        NetParams { shape, data }
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Mean of the embedding rows of every token in `question ++ response`,
    /// computed as `Σ_v (count_v / n) · emb[v]` so a single repeated token
    /// maps exactly to its row.
    pub fn featurize(&self, question: &[Token], response: &[Token]) -> Result<Vec<f64>> {
        let weights = self.pool_weights(question, response)?;
        let mut x = vec![0.0; NET_EMBED];
        for (v, w) in weights.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            let row = &self.data[v * NET_EMBED..(v + 1) * NET_EMBED];
            for (a, e) in x.iter_mut().zip(row) {
                *a += w * e;
            }
        }
        Ok(x)
    }

    /// `count_v / n` for every vocabulary entry.
    fn pool_weights(&self, question: &[Token], response: &[Token]) -> Result<Vec<f64>> {
        let n = question.len() + response.len();
        if n == 0 {
            return Err(Error::Contract("cannot featurize an empty sequence".into()));
        }
        let mut counts = vec![0usize; self.shape.vocab];
        for t in question.iter().chain(response) {
            if t.index() >= self.shape.vocab {
                return Err(Error::Contract(format!("token {t} outside vocabulary")));
            }
            counts[t.index()] += 1;
        }
        Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
    }

    fn dense(&self, w: usize, b: usize, input: &[f64], out: usize) -> Vec<f64> {
        (0..out)
            .map(|i| {
                let row = &self.data[w + i * input.len()..w + (i + 1) * input.len()];
                self.data[b + i] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    fn activations(&self, x: Vec<f64>) -> Activations {
        let o = self.shape.offsets();
        let a1: Vec<f64> = self.dense(o[1], o[2], &x, NET_WIDTHS[0]).into_iter().map(f64::tanh).collect();
        let a2: Vec<f64> = self.dense(o[3], o[4], &a1, NET_WIDTHS[1]).into_iter().map(f64::tanh).collect();
        let y = self.dense(o[5], o[6], &a2, NET_WIDTHS[2])[0];
        Activations { x, a1, a2, y }
    }

    pub fn forward(&self, question: &[Token], response: &[Token]) -> Result<f64> {
        Ok(self.activations(self.featurize(question, response)?).y)
    }

    /// Adds `dy · ∂y/∂θ` into `grad`.
    fn backward(&self, question: &[Token], response: &[Token], acts: &Activations, dy: f64, grad: &mut [f64]) {
        let o = self.shape.offsets();
        let [h1, h2, _] = NET_WIDTHS;
        // layer 3
        grad[o[6]] += dy;
        let mut da2 = vec![0.0; h2];
        for k in 0..h2 {
            grad[o[5] + k] += dy * acts.a2[k];
            da2[k] = dy * self.data[o[5] + k];
        }
        // layer 2
        let mut da1 = vec![0.0; h1];
        for k in 0..h2 {
            let dz = da2[k] * (1.0 - acts.a2[k] * acts.a2[k]);
            grad[o[4] + k] += dz;
            for i in 0..h1 {
                grad[o[3] + k * h1 + i] += dz * acts.a1[i];
                da1[i] += dz * self.data[o[3] + k * h1 + i];
            }
        }
        // layer 1
        let mut dx = vec![0.0; NET_EMBED];
        for k in 0..h1 {
            let dz = da1[k] * (1.0 - acts.a1[k] * acts.a1[k]);
            grad[o[2] + k] += dz;
            for i in 0..NET_EMBED {
                grad[o[1] + k * NET_EMBED + i] += dz * acts.x[i];
                dx[i] += dz * self.data[o[1] + k * NET_EMBED + i];
            }
        }
        // mean pool
        let weights = self.pool_weights(question, response).expect("validated by featurize");
        for (v, w) in weights.iter().enumerate().filter(|(_, w)| **w > 0.0) {
            let row = &mut grad[v * NET_EMBED..(v + 1) * NET_EMBED];
            for (g, d) in row.iter_mut().zip(&dx) {
                *g += w * d;
            }
        }
    }

    fn header(&self) -> Vec<u32> {
        let mut h = vec![self.shape.vocab as u32, NET_EMBED as u32, NET_WIDTHS.len() as u32];
        h.extend(NET_WIDTHS.iter().map(|w| *w as u32));
        h
    }

    fn groups(&self) -> Vec<Vec<f64>> {
        let o = self.shape.offsets();
        o.windows(2).map(|w| self.data[w[0]..w[1]].to_vec()).collect()
    }
}

/// Target/predictor pair. The target is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationNets {
    target: NetParams,
    predictor: NetParams,
    pub lr: f64,
}

impl ExplorationNets {
    pub fn new(vocab: usize, seed: u64, lr: f64) -> Self {
        let shape = NetShape { vocab };
        ExplorationNets {
            target: NetParams::random(shape, rng::derive(seed, &[rng::tag::EXPLORE, 0])),
            predictor: NetParams::random(shape, rng::derive(seed, &[rng::tag::EXPLORE, 1])),
            lr,
        }
    }

    /// Predictor initialized as an exact copy of the target.
    pub fn with_copied_predictor(vocab: usize, seed: u64, lr: f64) -> Self {
        let mut n = Self::new(vocab, seed, lr);
        n.predictor = n.target.clone();
        n
    }

    pub fn target(&self) -> &NetParams {
        &self.target
    }

    pub fn predictor(&self) -> &NetParams {
        &self.predictor
    }

    pub fn predictor_mut(&mut self) -> &mut NetParams {
        &mut self.predictor
    }

    /// `(f_P(q,o) − f_T(q,o))²`.
    pub fn novelty_raw(&self, question: &[Token], response: &[Token]) -> Result<f64> {
        let d = self.predictor.forward(question, response)? - self.target.forward(question, response)?;
        Ok(d * d)
    }

    /// Mean squared error over the batch and its gradient with respect to
    /// the predictor parameters.
    pub fn predictor_gradient(&self, batch: &[(&[Token], &[Token])]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Contract("predictor update needs a non-empty batch".into()));
        }
        let mut grad = vec![0.0; self.predictor.data.len()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for (q, o) in batch {
            let x = self.predictor.featurize(q, o)?;
            let acts = self.predictor.activations(x);
            let diff = acts.y - self.target.forward(q, o)?;
            loss += scale * diff * diff;
            self.predictor.backward(q, o, &acts, scale * 2.0 * diff, &mut grad);
        }
        Ok((loss, grad))
    }

    /// One gradient-descent step on the predictor. Returns the mean loss
    /// before the step.
    pub fn update_predictor(&mut self, batch: &[(&[Token], &[Token])]) -> Result<f64> {
        let (loss, grad) = self.predictor_gradient(batch)?;
        for (p, g) in self.predictor.data.iter_mut().zip(&grad) {
            *p -= self.lr * g;
        }
        Ok(loss)
    }

    pub(crate) fn to_container(&self, schedule_scalars: Vec<f64>) -> Container {
        let mut arrays = self.target.groups();
        arrays.extend(self.predictor.groups());
        arrays.push(vec![self.lr]);
        arrays.push(schedule_scalars);
        Container {
            magic: *EXPLORE_MAGIC,
            header: self.target.header(),
            arrays,
        }
    }

    pub(crate) fn from_container(c: &Container, path: &std::path::Path) -> Result<(Self, Vec<f64>)> {
        let bad = |reason: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: reason.into(),
        };
        c.expect_magic(EXPLORE_MAGIC, path)?;
        if c.header.len() != 6 || c.header[1] as usize != NET_EMBED || c.header[2] != 3 {
            return Err(bad("unexpected exploration header"));
        }
        let shape = NetShape {
            vocab: c.header[0] as usize,
        };
        if c.arrays.len() != 16 {
            return Err(bad("expected 16 arrays"));
        }
        let flat = |groups: &[Vec<f64>]| -> Result<NetParams> {
            let data: Vec<f64> = groups.concat();
            if data.len() != shape.len() {
                return Err(bad("parameter count mismatch"));
            }
            Ok(NetParams { shape, data })
        };
        let target = flat(&c.arrays[0..7])?;
        let predictor = flat(&c.arrays[7..14])?;
        let lr = *c.arrays[14].first().ok_or_else(|| bad("missing lr"))?;
        Ok((
            ExplorationNets {
                target,
                predictor,
                lr,
            },
            c.arrays[15].clone(),
        ))
    }
}

const EXPLORE_MAGIC: &[u8; 8] = b"NVRLEXP\0";
