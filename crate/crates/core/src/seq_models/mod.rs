//! Order-aware classifiers trained from scratch on padded id sequences: a
//! stacked LSTM and a small post-norm transformer encoder. Both use learned
//! token embeddings whose PAD row stays at zero, and both have hand-written
//! backward passes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{TokenSequence, PAD};
use crate::numeric::{argmax, log_softmax, softmax, DenseMatrix, Differentiable, ParamGroup};

mod lstm;
mod train;
mod transformer;

pub use lstm::{Lstm, LstmBody, LstmLayer};
pub use train::{evaluate, train, Divergence, EpochRecord, TrainFailure, TrainOutcome};
pub use transformer::{EncoderLayer, Transformer, TransformerBody};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqKind {
    Lstm,
    Transformer,
}

impl SeqKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            SeqKind::Lstm => 0.05,
            SeqKind::Transformer => 0.01,
        }
    }
}

/// Architecture and optimization settings shared by both sequence models.
/// `hidden` sizes the LSTM state; `n_heads` only applies to the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Unset means the per-architecture default.
    pub learning_rate: Option<f64>,
    pub seed: u64,
    pub max_len: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub patience: usize,
    /// Global L2 norm the gradient is clipped to before each step.
    pub clip_norm: f64,
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: None,
            seed: 42,
            max_len: 64,
            embed_dim: 64,
            hidden: 128,
            n_layers: 2,
            n_heads: 4,
            patience: 3,
            clip_norm: 5.0,
        }
    }
}

impl SeqConfig {
    pub fn learning_rate_for(&self, kind: SeqKind) -> f64 {
        self.learning_rate.unwrap_or_else(|| kind.default_learning_rate())
    }

    pub fn validate(&self, kind: SeqKind) -> Result<()> {
        let sizes = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_len", self.max_len),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
        ];
        if let Some((name, _)) = sizes.iter().find(|s| s.1 == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        let lr = self.learning_rate_for(kind);
        if !(lr > 0.0 && lr.is_finite()) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("learning_rate and clip_norm must be positive".into()));
        }
        if kind == SeqKind::Transformer && self.embed_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        Ok(())
    }
}

/// Ordered walk over every dense parameter tensor of a model body.
pub trait Tensors {
    fn tensors(&self) -> Vec<(String, &DenseMatrix)>;
    fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix>;
}

/// Gradient of a model with an embedding table and a dense body. Only the
/// embedding rows an example touched are stored.
#[derive(Debug, Clone)]
pub struct Gradients<B> {
    pub embed: BTreeMap<usize, Vec<f64>>,
    pub body: B,
}

impl<B: Tensors + Clone> Gradients<B> {
    pub fn zeros_like(body: &B) -> Self {
        let mut body = body.clone();
        for t in body.tensors_mut() {
            t.as_mut_slice().fill(0.0);
        }
        Self {
            embed: BTreeMap::new(),
            body,
        }
    }

    /// Add `delta` into the gradient of embedding row `id`. PAD is frozen.
    pub fn add_embed(&mut self, id: usize, delta: &[f64]) {
        if id == PAD {
            return;
        }
        let row = self.embed.entry(id).or_insert_with(|| vec![0.0; delta.len()]);
        for (r, d) in row.iter_mut().zip(delta) {
            *r += d;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        for (&id, row) in &other.embed {
            self.add_embed(id, row);
        }
        for (a, (_, b)) in self.body.tensors_mut().into_iter().zip(other.body.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.embed.values_mut().flatten().for_each(|v| *v *= alpha);
        for t in self.body.tensors_mut() {
            t.scale(alpha);
        }
    }

    pub fn norm(&self) -> f64 {
        let e: f64 = self.embed.values().flatten().map(|v| v * v).sum();
        let b: f64 = self
            .body
            .tensors()
            .iter()
            .map(|(_, t)| t.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum();
        (e + b).sqrt()
    }

    /// Rescale to `max_norm` if the global norm exceeds it; returns the
    /// norm before clipping.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

/// What the trainer needs from an architecture.
pub trait SeqNet: Clone + Send + Sync {
    type Body: Tensors + Clone + Send + Sync;

    fn embed(&self) -> &DenseMatrix;
    fn embed_mut(&mut self) -> &mut DenseMatrix;
    fn body(&self) -> &Self::Body;
    fn body_mut(&mut self) -> &mut Self::Body;
    fn n_classes(&self) -> usize;
    fn logits(&self, seq: &TokenSequence) -> Result<Vec<f64>>;
    /// Forward and backward for one example: adds `weight · ∂CE/∂θ` into
    /// `grads` and returns the unweighted cross-entropy and the logits.
    fn accumulate(&self, seq: &TokenSequence, label: usize, weight: f64, grads: &mut Gradients<Self::Body>) -> Result<(f64, Vec<f64>)>;

    /// Overwrite every parameter from a flat vector, embedding first.
    fn load_flat(&mut self, params: &[f64]) {
        let n = self.embed().as_slice().len();
        self.embed_mut().as_mut_slice().copy_from_slice(&params[..n]);
        let mut rest = &params[n..];
        for t in self.body_mut().tensors_mut() {
            let n = t.as_slice().len();
            t.as_mut_slice().copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
    }

    /// Whether `θ − lr · g` stays finite everywhere.
    fn step_is_finite(&self, grads: &Gradients<Self::Body>, lr: f64) -> bool {
        let embed = self.embed();
        let rows_ok = grads
            .embed
            .iter()
            .all(|(&id, row)| embed.row(id).iter().zip(row).all(|(w, g)| (w - lr * g).is_finite()));
        rows_ok
            && self
                .body()
                .tensors()
                .iter()
                .zip(grads.body.tensors())
                .all(|((_, p), (_, g))| p.as_slice().iter().zip(g.as_slice()).all(|(w, d)| (w - lr * d).is_finite()))
    }

    /// `θ ← θ − lr · g`; the PAD row is never touched.
    fn sgd_step(&mut self, grads: &Gradients<Self::Body>, lr: f64) {
        let embed = self.embed_mut();
        for (&id, row) in &grads.embed {
            if id != PAD {
                for (w, g) in embed.row_mut(id).iter_mut().zip(row) {
                    *w -= lr * g;
                }
            }
        }
        for (p, (_, g)) in self.body_mut().tensors_mut().into_iter().zip(grads.body.tensors()) {
            for (w, d) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *w -= lr * d;
            }
        }
    }
}

/// Shared input checks: non-empty active prefix, ids inside the table.
pub(crate) fn active_ids(seq: &TokenSequence, vocab_size: usize) -> Result<&[usize]> {
    if seq.true_length == 0 || seq.true_length > seq.ids.len() {
        return Err(Error::Invalid(format!(
            "sequence true_length {} must be in 1..={}",
            seq.true_length,
            seq.ids.len()
        )));
    }
    let ids = seq.active();
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab_size) {
        return Err(Error::Dimension {
            expected: vocab_size,
            actual: bad + 1,
        });
    }
    Ok(ids)
}

/// Cross-entropy of `logits` against `label` and its gradient `softmax − e_label`.
pub(crate) fn ce_and_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Invalid(format!("label {label} out of range for {} classes", logits.len())));
    }
    let loss = -log_softmax(logits)[label];
    let mut d = softmax(logits);
    d[label] -= 1.0;
    Ok((loss, d))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum SeqModel {
    Lstm(Lstm),
    Transformer(Transformer),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            SeqModel::Lstm($m) => $body,
            SeqModel::Transformer($m) => $body,
        }
    };
}

impl SeqModel {
    pub fn kind(&self) -> SeqKind {
        match self {
            SeqModel::Lstm(_) => SeqKind::Lstm,
            SeqModel::Transformer(_) => SeqKind::Transformer,
        }
    }

    pub fn n_classes(&self) -> usize {
        dispatch!(self, m => m.n_classes())
    }

    pub fn vocab_size(&self) -> usize {
        dispatch!(self, m => m.embed().rows())
    }

    pub fn embed(&self) -> &DenseMatrix {
        dispatch!(self, m => m.embed())
    }

    pub fn logits(&self, seq: &TokenSequence) -> Result<Vec<f64>> {
        dispatch!(self, m => m.logits(seq))
    }

    /// Most probable class and the softmax distribution.
    pub fn predict(&self, seq: &TokenSequence) -> Result<(usize, Vec<f64>)> {
        let z = self.logits(seq)?;
        Ok((argmax(&z), softmax(&z)))
    }

    /// All tensors, embedding first, as `(name, matrix)`.
    pub fn named_tensors(&self) -> Vec<(String, &DenseMatrix)> {
        dispatch!(self, m => {
            let mut t = vec![("embed".to_string(), m.embed())];
            t.extend(m.body().tensors());
            t
        })
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Mean cross-entropy and its flat gradient over a batch.
    fn flat_gradient<N: SeqNet>(net: &N, batch: &[(TokenSequence, usize)]) -> Result<(f64, Vec<f64>)> {
        let mut g = Gradients::zeros_like(net.body());
        let w = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (seq, y) in batch {
            loss += w * net.accumulate(seq, *y, w, &mut g)?.0;
        }
        let mut embed = DenseMatrix::zeros(net.embed().rows(), net.embed().cols());
        for (&id, row) in &g.embed {
            embed.row_mut(id).copy_from_slice(row);
        }
        let mut flat = embed.as_slice().to_vec();
        for (_, t) in g.body.tensors() {
            flat.extend_from_slice(t.as_slice());
        }
        Ok((loss, flat))
    }
}

/// Mean cross-entropy over a batch of `(sequence, label)` pairs.
impl Differentiable for SeqModel {
    type Input = [(TokenSequence, usize)];

    fn param_groups(&self) -> Vec<ParamGroup> {
        self.named_tensors()
            .into_iter()
            .map(|(name, t)| ParamGroup::new(name, t.as_slice().len()))
            .collect()
    }

    fn params(&self) -> Vec<f64> {
        self.named_tensors()
            .into_iter()
            .flat_map(|(_, t)| t.as_slice().to_vec())
            .collect()
    }

    fn set_params(&mut self, params: &[f64]) {
        dispatch!(self, m => m.load_flat(params))
    }

    fn loss(&self, batch: &Self::Input) -> Result<f64> {
        let w = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (seq, y) in batch {
            let z = self.logits(seq)?;
            total += w * ce_and_grad(&z, *y)?.0;
        }
        Ok(total)
    }

    fn gradient(&self, batch: &Self::Input) -> Result<Vec<f64>> {
        dispatch!(self, m => Self::flat_gradient(m, batch).map(|r| r.1))
    }
}

/// The small configurations gradient checks run on: V=8, d=4, h=4 over 5
/// positions for the LSTM and V=8, d=8, two heads, one layer over 6
/// positions for the encoder. Parameters are redrawn from `±1` (PAD row
/// kept at zero) so that no path through the network is so faint that its
/// central difference is rounding noise, and the example fills every position.
pub fn gradcheck_fixture(kind: SeqKind, seed: u64) -> (SeqModel, Vec<(TokenSequence, usize)>) {
    let mut rng = crate::numeric::Prng::new(seed);
    let (mut model, len) = match kind {
        SeqKind::Lstm => (SeqModel::Lstm(Lstm::new(8, 4, 4, 2, 3, &mut rng)), 5),
        SeqKind::Transformer => (SeqModel::Transformer(Transformer::new(8, 8, 2, 1, 6, 3, &mut rng)), 6),
    };
    let d = model.embed().cols();
    let mut theta: Vec<f64> = (0..model.param_count()).map(|_| rng.uniform(-1.0, 1.0)).collect();
    theta[PAD * d..(PAD + 1) * d].fill(0.0);
    model.set_params(&theta);
    let ids: Vec<usize> = (0..len).map(|_| 1 + rng.below(7)).collect();
    let label = rng.below(3);
    (model, vec![(TokenSequence { ids, true_length: len }, label)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, GradCheckConfig, Prng};

    fn seq(ids: &[usize], max_len: usize) -> TokenSequence {
        let mut v = ids.to_vec();
        v.resize(max_len, PAD);
        TokenSequence {
            ids: v,
            true_length: ids.len(),
        }
    }

    fn tiny_lstm(seed: u64) -> SeqModel {
        SeqModel::Lstm(Lstm::new(8, 4, 4, 2, 3, &mut Prng::new(seed)))
    }

    fn tiny_transformer(seed: u64) -> SeqModel {
        SeqModel::Transformer(Transformer::new(8, 8, 2, 1, 6, 3, &mut Prng::new(seed)))
    }

    fn zeroed(mut m: SeqModel) -> SeqModel {
        let n = m.params().len();
        m.set_params(&vec![0.0; n]);
        m
    }

    #[test]
    fn zero_lstm_gives_uniform_output() {
        let m = zeroed(tiny_lstm(1));
        let (_, p) = m.predict(&seq(&[2, 3, 4], 5)).unwrap();
        assert_eq!(m.logits(&seq(&[2, 3, 4], 5)).unwrap(), vec![0.0; 3]);
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn padding_never_changes_logits() {
        for m in [tiny_lstm(2), tiny_transformer(2)] {
            let a = m.logits(&seq(&[5, 2, 7], 3)).unwrap();
            let b = m.logits(&seq(&[5, 2, 7], 6)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn transposition_changes_logits_for_some_seed() {
        for build in [tiny_lstm as fn(u64) -> SeqModel, tiny_transformer] {
            let moved = (0..5).any(|s| {
                let m = build(s);
                let a = m.logits(&seq(&[2, 3, 4, 5], 6)).unwrap();
                let b = m.logits(&seq(&[3, 2, 4, 5], 6)).unwrap();
                a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-9)
            });
            assert!(moved);
        }
    }

    fn tiny_batch(rng: &mut Prng, len: usize) -> Vec<(TokenSequence, usize)> {
        (0..2)
            .map(|i| {
                let t = 2 + rng.below(len - 1);
                let ids: Vec<usize> = (0..t).map(|_| 1 + rng.below(7)).collect();
                (seq(&ids, len), i % 3)
            })
            .collect()
    }

    #[test]
    fn lstm_gradient_matches_finite_differences() {
        for s in 0..3 {
            let (m, batch) = gradcheck_fixture(SeqKind::Lstm, s);
            let r = grad_check(&m, &batch, &GradCheckConfig::default()).unwrap();
            assert!(r.passes(1e-4), "{r:?}");
            assert_eq!(r.groups.len(), 1 + 3 * 2 + 2);
        }
    }

    #[test]
    fn transformer_gradient_matches_finite_differences() {
        for s in 0..3 {
            let (m, batch) = gradcheck_fixture(SeqKind::Transformer, s);
            let r = grad_check(&m, &batch, &GradCheckConfig::default()).unwrap();
            assert!(r.passes(1e-4), "{r:?}");
        }
    }

    #[test]
    fn batched_gradient_matches_finite_differences() {
        let mut rng = Prng::new(9);
        for kind in [SeqKind::Lstm, SeqKind::Transformer] {
            let (m, _) = gradcheck_fixture(kind, 7);
            let len = if kind == SeqKind::Lstm { 5 } else { 6 };
            let batch: Vec<_> = (0..3)
                .map(|i| {
                    let ids: Vec<usize> = (0..len).map(|_| 1 + rng.below(7)).collect();
                    (seq(&ids, len), i)
                })
                .collect();
            let r = grad_check(&m, &batch, &GradCheckConfig::default()).unwrap();
            assert!(r.passes(1e-4), "{kind:?} {r:?}");
        }
    }

    #[test]
    fn pad_row_gets_no_gradient() {
        for m in [tiny_lstm(4), tiny_transformer(4)] {
            let g = m.gradient(&tiny_batch(&mut Prng::new(1), 5)).unwrap();
            assert!(g[..m.embed().cols()].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let SeqModel::Lstm(m) = tiny_lstm(5) else { unreachable!() };
        let mut g = Gradients::zeros_like(m.body());
        m.accumulate(&seq(&[2, 3], 4), 0, 0.0, &mut g).unwrap();
        assert_eq!(g.norm(), 0.0);
        let SeqModel::Transformer(t) = tiny_transformer(5) else { unreachable!() };
        let mut g = Gradients::zeros_like(t.body());
        t.accumulate(&seq(&[2, 3], 6), 0, 0.0, &mut g).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn empty_sequence_is_rejected() {
        for m in [tiny_lstm(1), tiny_transformer(1)] {
            assert!(m.logits(&seq(&[], 4)).is_err());
            assert!(m.logits(&seq(&[9], 4)).is_err());
        }
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let SeqModel::Lstm(m) = tiny_lstm(3) else { unreachable!() };
        let mut g = Gradients::zeros_like(m.body());
        m.accumulate(&seq(&[2, 3, 4], 5), 1, 100.0, &mut g).unwrap();
        let before = g.clip(5.0);
        assert!(before > 5.0);
        assert!((g.norm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn config_checks() {
        let c = SeqConfig {
            embed_dim: 10,
            n_heads: 4,
            ..Default::default()
        };
        assert!(c.validate(SeqKind::Transformer).is_err());
        assert!(c.validate(SeqKind::Lstm).is_ok());
        assert_eq!(SeqConfig::default().learning_rate_for(SeqKind::Lstm), 0.05);
        assert_eq!(SeqConfig::default().learning_rate_for(SeqKind::Transformer), 0.01);
    }
}
