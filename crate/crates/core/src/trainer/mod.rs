//! Desk-scale trainer for the joint cross-entropy + contrastive objective.

mod checkpoint;
mod gradcheck;
mod model;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::item_rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use gradcheck::{finite_difference_check, relative_error, GradCheckReport};
pub use model::{LossParts, ModelParams, ParamGrads};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty token sequence")]
    EmptySequence,
    #[error("empty batch")]
    EmptyBatch,
    #[error("token id {id} out of range for vocabulary of {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("encoder output has zero norm; cosine similarity undefined")]
    ZeroNorm,
    #[error("contrastive denominator is empty (batch of one with the positive excluded)")]
    EmptyDenominator,
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("empty training set")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token vocabulary with `<s>`, `</s>`, `<unk>` at ids 0, 1, 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from(vec![BOS_TOKEN.to_string(), EOS_TOKEN.to_string(), UNK_TOKEN.to_string()])
    }
}

impl Vocab {
    /// Reserved tokens followed by `tokens` in first-seen order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Vocab::default();
        for t in tokens {
            v.add(t.as_ref());
        }
        v
    }

    pub fn add(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(UNK_TOKEN)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Index-encoded (source, target) pairs. Targets end with `</s>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Batch {
    pub fn new(pairs: Vec<(Vec<usize>, Vec<usize>)>, vocab_size: usize) -> Result<Self, TrainError> {
        if pairs.is_empty() {
            return Err(TrainError::EmptyBatch);
        }
        for (x, y) in &pairs {
            if x.is_empty() || y.is_empty() {
                return Err(TrainError::EmptySequence);
            }
            if let Some(&id) = x.iter().chain(y).find(|&&t| t >= vocab_size) {
                return Err(TrainError::TokenOutOfRange { id, size: vocab_size });
            }
        }
        Ok(Batch { pairs })
    }

    pub fn pairs(&self) -> &[(Vec<usize>, Vec<usize>)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn mean_target_len(&self) -> f64 {
        self.pairs.iter().map(|(_, y)| y.len()).sum::<usize>() as f64 / self.pairs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub label_smoothing: f64,
    pub contrastive_lambda: f64,
    /// Keep the positive pair in the contrastive denominator.
    pub include_positive: bool,
    pub init_scale: f64,
    pub seed: u64,
    pub max_decode_len: usize,
    /// Rescale each step's gradient to at most this global L2 norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 16,
            steps: 1000,
            batch_size: 16,
            learning_rate: 0.05,
            temperature: 0.1,
            label_smoothing: 0.1,
            contrastive_lambda: 1.0,
            include_positive: true,
            init_scale: 0.1,
            seed: 0,
            max_decode_len: 64,
            max_grad_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TrainError::Temperature(self.temperature));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label_smoothing must be in [0, 1)");
        }
        if !(self.contrastive_lambda >= 0.0 && self.contrastive_lambda.is_finite()) {
            return bad("contrastive_lambda must be finite and non-negative");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and non-negative");
        }
        if self.max_grad_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return bad("max_grad_norm must be finite and positive");
        }
        if !self.include_positive && self.batch_size < 2 {
            return Err(TrainError::EmptyDenominator);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub loss_ce: f64,
    pub loss_con: f64,
    pub total: f64,
}

pub fn write_curve_csv<W: Write>(mut w: W, curve: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(w, "step,loss_ce,loss_con,total")?;
    for p in curve {
        writeln!(w, "{},{},{},{}", p.step, p.loss_ce, p.loss_con, p.total)?;
    }
    Ok(())
}

pub fn save_curve_csv(path: &Path, curve: &[CurvePoint]) -> std::io::Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_curve_csv(f, curve)
}

/// Seam between the training loop and a concrete model.
pub trait Seq2SeqModel {
    type Grads;

    fn vocab(&self) -> &Vocab;
    fn loss_and_gradients(&self, batch: &Batch, cfg: &TrainConfig) -> Result<(LossParts, Self::Grads), TrainError>;
    fn apply(&mut self, grads: &Self::Grads, lr: f64);
    fn grad_norm(grads: &Self::Grads) -> f64;
    fn decode(&self, source: &[usize], max_len: usize) -> Result<Vec<usize>, TrainError>;
}

impl Seq2SeqModel for ModelParams {
    type Grads = ParamGrads;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn loss_and_gradients(&self, batch: &Batch, cfg: &TrainConfig) -> Result<(LossParts, ParamGrads), TrainError> {
        ModelParams::loss_and_gradients(self, batch, cfg)
    }

    fn apply(&mut self, grads: &ParamGrads, lr: f64) {
        self.apply_gradients(grads, lr)
    }

    fn grad_norm(grads: &ParamGrads) -> f64 {
        grads.l2_norm()
    }

    fn decode(&self, source: &[usize], max_len: usize) -> Result<Vec<usize>, TrainError> {
        self.greedy_decode(source, max_len)
    }
}

/// A (source, target) training example in surface tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextPair {
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl TextPair {
    pub fn new<S: AsRef<str>>(source: &[S], target: &[S]) -> Self {
        TextPair {
            source: source.iter().map(|s| s.as_ref().to_string()).collect(),
            target: target.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }
}

pub fn build_vocab(pairs: &[TextPair]) -> Vocab {
    Vocab::from_tokens(pairs.iter().flat_map(|p| p.source.iter().chain(&p.target)))
}

/// Index-encodes pairs and appends `</s>` to each target.
pub fn encode_pairs(vocab: &Vocab, pairs: &[TextPair]) -> Result<Vec<(Vec<usize>, Vec<usize>)>, TrainError> {
    pairs
        .iter()
        .map(|p| {
            if p.source.is_empty() {
                return Err(TrainError::EmptySequence);
            }
            let mut y = vocab.encode(&p.target);
            y.push(EOS);
            Ok((vocab.encode(&p.source), y))
        })
        .collect()
}

/// Plain gradient descent over shuffled mini-batches. Each epoch reshuffles
/// with a generator derived from `cfg.seed`. Any non-finite loss aborts with
/// [`TrainError::Divergence`].
pub fn train_model<M: Seq2SeqModel>(
    model: &mut M,
    data: &[(Vec<usize>, Vec<usize>)],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&CurvePoint),
) -> Result<Vec<CurvePoint>, TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if !cfg.include_positive && data.len() < 2 {
        return Err(TrainError::EmptyDenominator);
    }
    let vsize = model.vocab().len();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = data.len();
    let mut epoch = 0u64;
    let mut curve = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        if cursor >= order.len() {
            order.shuffle(&mut item_rng(cfg.seed, epoch + 1));
            epoch += 1;
            cursor = 0;
        }
        let mut end = (cursor + cfg.batch_size).min(order.len());
        if !cfg.include_positive && end - cursor < 2 {
            cursor = end.saturating_sub(2);
            end = cursor + 2;
        }
        let batch = Batch::new(order[cursor..end].iter().map(|&i| data[i].clone()).collect(), vsize)?;
        cursor = end;
        let (loss, grads) = model.loss_and_gradients(&batch, cfg)?;
        if !loss.total.is_finite() || !loss.cross_entropy.is_finite() || !loss.contrastive.is_finite() {
            return Err(TrainError::Divergence { step, loss: loss.total });
        }
        let point = CurvePoint {
            step,
            loss_ce: loss.cross_entropy,
            loss_con: loss.contrastive,
            total: loss.total,
        };
        let scale = match cfg.max_grad_norm {
            Some(c) => {
                let n = M::grad_norm(&grads);
                if !n.is_finite() {
                    return Err(TrainError::Divergence { step, loss: loss.total });
                }
                if n > c { c / n } else { 1.0 }
            }
            None => 1.0,
        };
        on_step(&point);
        curve.push(point);
        model.apply(&grads, cfg.learning_rate * scale);
    }
    Ok(curve)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub curve: Vec<CurvePoint>,
}

/// Builds a vocabulary from `pairs`, initializes a model from `cfg.seed` and
/// trains it.
pub fn train(pairs: &[TextPair], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let vocab = build_vocab(pairs);
    let data = encode_pairs(&vocab, pairs)?;
    let mut model = ModelParams::init(vocab, cfg.dim, cfg.init_scale, &mut item_rng(cfg.seed, 0));
    let curve = train_model(&mut model, &data, cfg, |_| {})?;
    Ok(TrainOutcome { model, curve })
}

/// Greedy translation of surface tokens. Unknown source tokens map to `<unk>`.
pub fn translate<S: AsRef<str>>(model: &ModelParams, source: &[S], max_len: usize) -> Result<Vec<String>, TrainError> {
    let ids = model.vocab.encode(source);
    Ok(model.vocab.decode(&model.greedy_decode(&ids, max_len)?))
}

/// Greedy translation with the decoder primed by `prefix` (typically the
/// target language token). The output starts with `prefix`.
pub fn translate_with_prefix<S: AsRef<str>, P: AsRef<str>>(
    model: &ModelParams,
    source: &[S],
    prefix: &[P],
    max_len: usize,
) -> Result<Vec<String>, TrainError> {
    let ids = model.vocab.encode(source);
    let forced = model.vocab.encode(prefix);
    Ok(model.vocab.decode(&model.greedy_decode_from(&ids, &forced, max_len)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_reserves_specials() {
        let v = Vocab::from_tokens(["a", "b", "a"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("<s>"), BOS);
        assert_eq!(v.id("</s>"), EOS);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.id("b"), 4);
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
    }

    #[test]
    fn batch_validation() {
        assert!(matches!(Batch::new(vec![], 5), Err(TrainError::EmptyBatch)));
        assert!(matches!(Batch::new(vec![(vec![], vec![1])], 5), Err(TrainError::EmptySequence)));
        assert!(matches!(
            Batch::new(vec![(vec![7], vec![1])], 5),
            Err(TrainError::TokenOutOfRange { id: 7, size: 5 })
        ));
        let b = Batch::new(vec![(vec![3], vec![4, 1]), (vec![3], vec![1])], 5).unwrap();
        assert_eq!(b.mean_target_len(), 1.5);
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.temperature = 0.0;
        assert!(matches!(c.validate(), Err(TrainError::Temperature(_))));
        c = TrainConfig { label_smoothing: 1.0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        c = TrainConfig { include_positive: false, batch_size: 1, ..TrainConfig::default() };
        assert!(matches!(c.validate(), Err(TrainError::EmptyDenominator)));
    }

    #[test]
    fn curve_csv_header() {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &[CurvePoint { step: 0, loss_ce: 1.5, loss_con: 0.25, total: 2.0 }]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "step,loss_ce,loss_con,total\n0,1.5,0.25,2\n");
    }

    #[test]
    fn zero_learning_rate_leaves_params() {
        let pairs = vec![TextPair::new(&["a", "b"], &["x"]), TextPair::new(&["c"], &["y", "z"])];
        let cfg = TrainConfig { learning_rate: 0.0, steps: 5, batch_size: 2, ..TrainConfig::default() };
        let vocab = build_vocab(&pairs);
        let init = ModelParams::init(vocab, cfg.dim, cfg.init_scale, &mut item_rng(cfg.seed, 0));
        let out = train(&pairs, &cfg).unwrap();
        assert_eq!(out.model, init);
        assert_eq!(out.curve.len(), 5);
    }
}
