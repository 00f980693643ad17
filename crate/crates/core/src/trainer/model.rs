//! Mean-pool encoder with a bilinear output scorer, and the analytic
//! gradients of the joint objective.
//!
//! ```text
//! E(x)        = tanh(W · mean(emb[x]) + b)
//! q_t         = E(x) + emb[y_{t-1}]            (y_{-1} = <s>)
//! logit_t(v)  = q_t^T · M · emb[v]
//! L_CE        = Σ_pairs Σ_t  -(1-ε) log p_t(y_t) - (ε/|V|) Σ_v log p_t(v)
//! s_ij        = cos(E(x_i), E(y_j))
//! L_CON       = Σ_i  -s_ii/τ + log Σ_j exp(s_ij/τ)
//! L           = L_CE + λ · |s| · L_CON,   |s| = mean target length in the batch
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Batch, TrainConfig, TrainError, Vocab, BOS, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub vocab: Vocab,
    pub dim: usize,
    /// `|V| × d`, row per token.
    pub embeddings: Vec<f64>,
    /// `d × d`, row per output unit.
    pub encoder_proj: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    /// `d × d` bilinear form between decoder query and token embedding.
    pub decoder_scorer: Vec<f64>,
}

/// Gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub embeddings: Vec<f64>,
    pub encoder_proj: Vec<f64>,
    pub encoder_bias: Vec<f64>,
    pub decoder_scorer: Vec<f64>,
}

impl ParamGrads {
    fn zeros(p: &ModelParams) -> Self {
        ParamGrads {
            embeddings: vec![0.0; p.embeddings.len()],
            encoder_proj: vec![0.0; p.encoder_proj.len()],
            encoder_bias: vec![0.0; p.encoder_bias.len()],
            decoder_scorer: vec![0.0; p.decoder_scorer.len()],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("embeddings", &self.embeddings),
            ("encoder_proj", &self.encoder_proj),
            ("encoder_bias", &self.encoder_bias),
            ("decoder_scorer", &self.decoder_scorer),
        ]
    }

    /// Euclidean norm over all tensors.
    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, t)| t.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Loss components for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub cross_entropy: f64,
    pub contrastive: f64,
    /// `λ · |s|`.
    pub contrastive_weight: f64,
    pub total: f64,
}

struct Encoded {
    mean: Vec<f64>,
    out: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

impl ModelParams {
    pub fn zeros(vocab: Vocab, dim: usize) -> Self {
        let v = vocab.len();
        ModelParams {
            vocab,
            dim,
            embeddings: vec![0.0; v * dim],
            encoder_proj: vec![0.0; dim * dim],
            encoder_bias: vec![0.0; dim],
            decoder_scorer: vec![0.0; dim * dim],
        }
    }

    /// Every entry drawn uniformly from `[-scale, scale]`.
    pub fn init<R: Rng + ?Sized>(vocab: Vocab, dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = ModelParams::zeros(vocab, dim);
        for t in p.tensors_mut() {
            for x in t.iter_mut() {
                *x = rng.random_range(-scale..=scale);
            }
        }
        p
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [
            &mut self.embeddings,
            &mut self.encoder_proj,
            &mut self.encoder_bias,
            &mut self.decoder_scorer,
        ]
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("embeddings", &self.embeddings),
            ("encoder_proj", &self.encoder_proj),
            ("encoder_bias", &self.encoder_bias),
            ("decoder_scorer", &self.decoder_scorer),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    fn emb(&self, token: usize) -> &[f64] {
        &self.embeddings[token * self.dim..(token + 1) * self.dim]
    }

    fn encode_cached(&self, x: &[usize]) -> Encoded {
        let d = self.dim;
        let mut mean = vec![0.0; d];
        for &t in x {
            for (m, e) in mean.iter_mut().zip(self.emb(t)) {
                *m += e;
            }
        }
        let inv = 1.0 / x.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        let out = (0..d)
            .map(|i| (dot(&self.encoder_proj[i * d..(i + 1) * d], &mean) + self.encoder_bias[i]).tanh())
            .collect();
        Encoded { mean, out }
    }

    /// Pooled source representation `tanh(W · mean(emb[x]) + b)`.
    pub fn encode(&self, x: &[usize]) -> Result<Vec<f64>, TrainError> {
        if x.is_empty() {
            return Err(TrainError::EmptySequence);
        }
        Ok(self.encode_cached(x).out)
    }

    /// `M^T q`, so that `logit(v) = emb[v] · (M^T q)`.
    fn scorer_query(&self, q: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut r = vec![0.0; d];
        for (i, qi) in q.iter().enumerate() {
            for (j, rj) in r.iter_mut().enumerate() {
                *rj += self.decoder_scorer[i * d + j] * qi;
            }
        }
        r
    }

    fn logits_for(&self, r: &[f64]) -> Vec<f64> {
        (0..self.vocab_size()).map(|v| dot(self.emb(v), r)).collect()
    }

    fn query(&self, enc: &[f64], prev: usize) -> Vec<f64> {
        enc.iter().zip(self.emb(prev)).map(|(a, b)| a + b).collect()
    }

    /// Output logits at one decoding step.
    pub fn step_logits(&self, enc: &[f64], prev: usize) -> Vec<f64> {
        self.logits_for(&self.scorer_query(&self.query(enc, prev)))
    }

    /// Summed token-level cross entropy with label smoothing `epsilon`.
    pub fn cross_entropy(&self, batch: &Batch, epsilon: f64) -> f64 {
        let v = self.vocab_size() as f64;
        let mut total = 0.0;
        for (x, y) in batch.pairs() {
            let enc = self.encode_cached(x).out;
            let mut prev = BOS;
            for &gold in y {
                let lp = log_softmax(&self.step_logits(&enc, prev));
                let smooth: f64 = lp.iter().sum::<f64>() / v;
                total += -(1.0 - epsilon) * lp[gold] - epsilon * smooth;
                prev = gold;
            }
        }
        total
    }

    fn similarity_table(&self, batch: &Batch) -> Result<(Vec<Encoded>, Vec<Encoded>, Vec<f64>), TrainError> {
        let xs: Vec<Encoded> = batch.pairs().iter().map(|(x, _)| self.encode_cached(x)).collect();
        let ys: Vec<Encoded> = batch.pairs().iter().map(|(_, y)| self.encode_cached(y)).collect();
        for e in xs.iter().chain(&ys) {
            if norm(&e.out) == 0.0 {
                return Err(TrainError::ZeroNorm);
            }
        }
        let n = xs.len();
        let mut sims = vec![0.0; n * n];
        for i in 0..n {
            let na = norm(&xs[i].out);
            for j in 0..n {
                sims[i * n + j] = dot(&xs[i].out, &ys[j].out) / (na * norm(&ys[j].out));
            }
        }
        Ok((xs, ys, sims))
    }

    /// Per-row softmax weights of the contrastive denominator and the row
    /// losses. With `include_positive = false` the positive pair is dropped
    /// from the denominator.
    fn contrastive_rows(sims: &[f64], n: usize, tau: f64, include_positive: bool) -> Result<(f64, Vec<f64>), TrainError> {
        if !include_positive && n < 2 {
            return Err(TrainError::EmptyDenominator);
        }
        let mut loss = 0.0;
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            let row = &sims[i * n..(i + 1) * n];
            let in_denom = |j: usize| include_positive || j != i;
            let max = (0..n).filter(|&j| in_denom(j)).map(|j| row[j] / tau).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (0..n).filter(|&j| in_denom(j)).map(|j| (row[j] / tau - max).exp()).sum();
            loss += -row[i] / tau + max + z.ln();
            for j in (0..n).filter(|&j| in_denom(j)) {
                weights[i * n + j] = (row[j] / tau - max).exp() / z;
            }
        }
        Ok((loss, weights))
    }

    pub fn contrastive_loss(&self, batch: &Batch, tau: f64, include_positive: bool) -> Result<f64, TrainError> {
        if tau <= 0.0 {
            return Err(TrainError::Temperature(tau));
        }
        let (_, _, sims) = self.similarity_table(batch)?;
        Ok(Self::contrastive_rows(&sims, batch.len(), tau, include_positive)?.0)
    }

    pub fn total_loss(&self, batch: &Batch, cfg: &TrainConfig) -> Result<LossParts, TrainError> {
        let ce = self.cross_entropy(batch, cfg.label_smoothing);
        let con = self.contrastive_loss(batch, cfg.temperature, cfg.include_positive)?;
        let weight = cfg.contrastive_lambda * batch.mean_target_len();
        Ok(LossParts {
            cross_entropy: ce,
            contrastive: con,
            contrastive_weight: weight,
            total: ce + weight * con,
        })
    }

    fn backprop_encoder(&self, enc: &Encoded, seq: &[usize], d_out: &[f64], g: &mut ParamGrads) {
        let d = self.dim;
        let dz: Vec<f64> = d_out.iter().zip(&enc.out).map(|(g, o)| g * (1.0 - o * o)).collect();
        let mut d_mean = vec![0.0; d];
        for i in 0..d {
            g.encoder_bias[i] += dz[i];
            for j in 0..d {
                g.encoder_proj[i * d + j] += dz[i] * enc.mean[j];
                d_mean[j] += self.encoder_proj[i * d + j] * dz[i];
            }
        }
        let inv = 1.0 / seq.len() as f64;
        for &t in seq {
            for j in 0..d {
                g.embeddings[t * d + j] += d_mean[j] * inv;
            }
        }
    }

    /// Loss parts and the analytic gradient of `total` w.r.t. every parameter.
    pub fn loss_and_gradients(&self, batch: &Batch, cfg: &TrainConfig) -> Result<(LossParts, ParamGrads), TrainError> {
        if cfg.temperature <= 0.0 {
            return Err(TrainError::Temperature(cfg.temperature));
        }
        let d = self.dim;
        let vsize = self.vocab_size();
        let eps = cfg.label_smoothing;
        let mut g = ParamGrads::zeros(self);
        let (xs, ys, sims) = self.similarity_table(batch)?;
        let n = batch.len();

        let mut d_enc_x: Vec<Vec<f64>> = vec![vec![0.0; d]; n];
        let mut d_enc_y: Vec<Vec<f64>> = vec![vec![0.0; d]; n];

        // cross entropy
        let mut ce = 0.0;
        for (k, (_, y)) in batch.pairs().iter().enumerate() {
            let enc = &xs[k].out;
            let mut prev = BOS;
            for &gold in y {
                let q = self.query(enc, prev);
                let r = self.scorer_query(&q);
                let lp = log_softmax(&self.logits_for(&r));
                ce += -(1.0 - eps) * lp[gold] - eps * lp.iter().sum::<f64>() / vsize as f64;

                let mut dr = vec![0.0; d];
                for (v, l) in lp.iter().enumerate() {
                    let target = eps / vsize as f64 + if v == gold { 1.0 - eps } else { 0.0 };
                    let gl = l.exp() - target;
                    if gl == 0.0 {
                        continue;
                    }
                    let e = self.emb(v);
                    for j in 0..d {
                        g.embeddings[v * d + j] += gl * r[j];
                        dr[j] += gl * e[j];
                    }
                }
                // r = M^T q
                let mut dq = vec![0.0; d];
                for i in 0..d {
                    for j in 0..d {
                        g.decoder_scorer[i * d + j] += q[i] * dr[j];
                        dq[i] += self.decoder_scorer[i * d + j] * dr[j];
                    }
                }
                for j in 0..d {
                    d_enc_x[k][j] += dq[j];
                    g.embeddings[prev * d + j] += dq[j];
                }
                prev = gold;
            }
        }

        // contrastive
        let (con, weights) = Self::contrastive_rows(&sims, n, cfg.temperature, cfg.include_positive)?;
        let weight = cfg.contrastive_lambda * batch.mean_target_len();
        let tau = cfg.temperature;
        for i in 0..n {
            let a = &xs[i].out;
            let na = norm(a);
            for j in 0..n {
                let mut ds = weights[i * n + j] / tau;
                if i == j {
                    ds -= 1.0 / tau;
                }
                if ds == 0.0 {
                    continue;
                }
                let ds = ds * weight;
                let b = &ys[j].out;
                let nb = norm(b);
                let s = sims[i * n + j];
                for t in 0..d {
                    d_enc_x[i][t] += ds * (b[t] / (na * nb) - s * a[t] / (na * na));
                    d_enc_y[j][t] += ds * (a[t] / (na * nb) - s * b[t] / (nb * nb));
                }
            }
        }

        for (k, (x, y)) in batch.pairs().iter().enumerate() {
            self.backprop_encoder(&xs[k], x, &d_enc_x[k], &mut g);
            self.backprop_encoder(&ys[k], y, &d_enc_y[k], &mut g);
        }

        Ok((
            LossParts {
                cross_entropy: ce,
                contrastive: con,
                contrastive_weight: weight,
                total: ce + weight * con,
            },
            g,
        ))
    }

    pub fn apply_gradients(&mut self, g: &ParamGrads, lr: f64) {
        if lr == 0.0 {
            return;
        }
        let grads = [&g.embeddings, &g.encoder_proj, &g.encoder_bias, &g.decoder_scorer];
        for (p, g) in self.tensors_mut().into_iter().zip(grads) {
            for (w, d) in p.iter_mut().zip(g) {
                *w -= lr * d;
            }
        }
    }

    /// Greedy decoding: argmax per step (lowest index on ties), feeding the
    /// prediction back as the previous token. Stops before `</s>` or after
    /// `max_len` tokens.
    pub fn greedy_decode(&self, x: &[usize], max_len: usize) -> Result<Vec<usize>, TrainError> {
        self.greedy_decode_from(x, &[], max_len)
    }

    /// Greedy decoding that first feeds `prefix` as forced output tokens.
    /// The returned sequence starts with `prefix`; `max_len` bounds the
    /// generated tokens after it.
    pub fn greedy_decode_from(&self, x: &[usize], prefix: &[usize], max_len: usize) -> Result<Vec<usize>, TrainError> {
        let v = self.vocab_size();
        if let Some(&id) = prefix.iter().find(|&&id| id >= v) {
            return Err(TrainError::TokenOutOfRange { id, size: v });
        }
        let mut out = prefix.to_vec();
        if max_len == 0 {
            return Ok(out);
        }
        let enc = self.encode(x)?;
        let mut prev = prefix.last().copied().unwrap_or(BOS);
        while out.len() - prefix.len() < max_len {
            let logits = self.step_logits(&enc, prev);
            let mut best = 0;
            for (v, l) in logits.iter().enumerate() {
                if *l > logits[best] {
                    best = v;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
            prev = best;
        }
        Ok(out)
    }
}
