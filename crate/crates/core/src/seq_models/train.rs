use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::TokenSequence;
use crate::numeric::{argmax, deterministic_mode, pairwise_sum, Prng};

use super::{Gradients, Lstm, SeqConfig, SeqKind, SeqModel, SeqNet, Transformer};

/// Examples per work unit inside a batch. Fixed so the reduction tree, and
/// with it every rounding step, does not depend on the thread count.
const CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: SeqModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// State at the moment a batch produced a non-finite loss or gradient.
#[derive(Debug, Clone)]
pub struct Divergence {
    /// Parameters before the offending batch; all finite.
    pub last_finite: SeqModel,
    pub history: Vec<EpochRecord>,
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug)]
pub enum TrainFailure {
    Invalid(Error),
    Diverged(Box<Divergence>),
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainFailure::Invalid(e) => e.fmt(f),
            TrainFailure::Diverged(d) => write!(
                f,
                "epoch {}, batch {}: loss {}, gradient norm {} after {} completed epochs",
                d.epoch,
                d.batch,
                d.loss,
                d.grad_norm,
                d.history.len()
            ),
        }
    }
}

impl std::error::Error for TrainFailure {}

impl From<Error> for TrainFailure {
    fn from(e: Error) -> Self {
        TrainFailure::Invalid(e)
    }
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        match f {
            TrainFailure::Invalid(e) => e,
            d @ TrainFailure::Diverged(_) => Error::Diverged(d.to_string()),
        }
    }
}

/// Fit a fresh model with mini-batch gradient descent and early stopping on
/// validation loss. Training stops once the validation loss has failed to
/// improve for more than `patience` consecutive epochs. With an empty
/// validation set every epoch runs and the last model is returned.
pub fn train(
    kind: SeqKind,
    train_set: &[(TokenSequence, usize)],
    validation: &[(TokenSequence, usize)],
    vocab_size: usize,
    n_classes: usize,
    config: &SeqConfig,
) -> Result<TrainOutcome, TrainFailure> {
    config.validate(kind)?;
    if train_set.is_empty() {
        return Err(Error::Invalid("no training sequences".into()).into());
    }
    if n_classes < 2 {
        return Err(Error::Invalid("sequence models need at least two classes".into()).into());
    }
    let mut rng = Prng::new(config.seed);
    match kind {
        SeqKind::Lstm => {
            let net = Lstm::new(vocab_size, config.embed_dim, config.hidden, config.n_layers, n_classes, &mut rng);
            run(net, SeqModel::Lstm, train_set, validation, config, kind, rng)
        }
        SeqKind::Transformer => {
            let net = Transformer::new(
                vocab_size,
                config.embed_dim,
                config.n_heads,
                config.n_layers,
                config.max_len,
                n_classes,
                &mut rng,
            );
            run(net, SeqModel::Transformer, train_set, validation, config, kind, rng)
        }
    }
}

struct BatchResult<B> {
    loss_sum: f64,
    correct: usize,
    grads: Gradients<B>,
}

fn chunk_gradient<N: SeqNet>(net: &N, part: &[&(TokenSequence, usize)], weight: f64) -> Result<BatchResult<N::Body>> {
    let mut grads = Gradients::zeros_like(net.body());
    let mut losses = Vec::with_capacity(part.len());
    let mut correct = 0;
    for (seq, y) in part {
        let (loss, logits) = net.accumulate(seq, *y, weight, &mut grads)?;
        losses.push(loss);
        correct += usize::from(argmax(&logits) == *y);
    }
    Ok(BatchResult {
        loss_sum: losses.iter().sum(),
        correct,
        grads,
    })
}

fn combine<B: super::Tensors + Clone>(mut a: BatchResult<B>, b: BatchResult<B>) -> BatchResult<B> {
    a.loss_sum += b.loss_sum;
    a.correct += b.correct;
    a.grads.merge(&b.grads);
    a
}

/// Mean-loss gradient over one batch. In deterministic mode the chunk
/// results are merged pairwise in a fixed tree; otherwise rayon reduces them
/// in whatever order the threads finish.
fn batch_gradient<N: SeqNet>(net: &N, batch: &[&(TokenSequence, usize)]) -> Result<BatchResult<N::Body>> {
    let weight = 1.0 / batch.len() as f64;
    if deterministic_mode() {
        let mut parts = batch
            .par_chunks(CHUNK)
            .map(|p| chunk_gradient(net, p, weight))
            .collect::<Result<Vec<_>>>()?;
        while parts.len() > 1 {
            let mut next = Vec::with_capacity(parts.len().div_ceil(2));
            let mut it = parts.into_iter();
            while let Some(a) = it.next() {
                next.push(match it.next() {
                    Some(b) => combine(a, b),
                    None => a,
                });
            }
            parts = next;
        }
        Ok(parts.pop().expect("non-empty batch"))
    } else {
        batch
            .par_chunks(CHUNK)
            .map(|p| chunk_gradient(net, p, weight))
            .try_reduce(
                || BatchResult {
                    loss_sum: 0.0,
                    correct: 0,
                    grads: Gradients::zeros_like(net.body()),
                },
                |a, b| Ok(combine(a, b)),
            )
    }
}

/// Mean cross-entropy and accuracy of a trained model on labeled sequences.
pub fn evaluate(model: &SeqModel, data: &[(TokenSequence, usize)]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Invalid("nothing to evaluate".into()));
    }
    let per: Vec<(f64, bool)> = data
        .par_iter()
        .map(|(seq, y)| {
            let z = model.logits(seq)?;
            let (loss, _) = super::ce_and_grad(&z, *y)?;
            Ok((loss, argmax(&z) == *y))
        })
        .collect::<Result<_>>()?;
    let losses: Vec<f64> = per.iter().map(|p| p.0).collect();
    let correct = per.iter().filter(|p| p.1).count();
    Ok((pairwise_sum(&losses) / data.len() as f64, correct as f64 / data.len() as f64))
}

fn run<N: SeqNet>(
    mut net: N,
    wrap: fn(N) -> SeqModel,
    train_set: &[(TokenSequence, usize)],
    validation: &[(TokenSequence, usize)],
    config: &SeqConfig,
    kind: SeqKind,
    mut rng: Prng,
) -> Result<TrainOutcome, TrainFailure> {
    let lr = config.learning_rate_for(kind);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, N)> = None;
    let mut bad_epochs = 0;
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&(TokenSequence, usize)> = idx.iter().map(|&i| &train_set[i]).collect();
            let mut r = batch_gradient(&net, &batch)?;
            let norm = r.grads.norm();
            if !r.loss_sum.is_finite() || !norm.is_finite() {
                return Err(TrainFailure::Diverged(Box::new(Divergence {
                    last_finite: wrap(net),
                    history,
                    epoch,
                    batch: b,
                    loss: r.loss_sum / batch.len() as f64,
                    grad_norm: norm,
                })));
            }
            r.grads.clip(config.clip_norm);
            if !net.step_is_finite(&r.grads, lr) {
                return Err(TrainFailure::Diverged(Box::new(Divergence {
                    last_finite: wrap(net),
                    history,
                    epoch,
                    batch: b,
                    loss: r.loss_sum / batch.len() as f64,
                    grad_norm: norm,
                })));
            }
            net.sgd_step(&r.grads, lr);
            loss_sum += r.loss_sum;
            correct += r.correct;
        }
        let n = train_set.len() as f64;
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&wrap(net.clone()), validation)?;
            (Some(l), Some(a))
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: correct as f64 / n,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "{kind:?} epoch {epoch}: train loss {:.4} acc {:.4}, val loss {:?} acc {:?}",
            record.train_loss,
            record.train_accuracy,
            record.val_loss,
            record.val_accuracy
        );
        history.push(record);

        let Some(vl) = val_loss else { continue };
        if !vl.is_finite() {
            return Err(TrainFailure::Diverged(Box::new(Divergence {
                last_finite: wrap(best.map_or(net, |b| b.2)),
                history,
                epoch,
                batch: 0,
                loss: vl,
                grad_norm: f64::NAN,
            })));
        }
        if best.as_ref().is_none_or(|b| vl < b.0) {
            best = Some((vl, epoch, net.clone()));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (net, history.len()),
    };
    Ok(TrainOutcome {
        model: wrap(model),
        history,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::PAD;

    /// Each class owns one marker id; the rest of the sequence is shared
    /// filler drawn from ids 2..7.
    fn markers(n: usize, k: usize, seed: u64, max_len: usize) -> Vec<(TokenSequence, usize)> {
        let mut rng = Prng::new(seed);
        (0..n)
            .map(|i| {
                let y = i % k;
                let len = 3 + rng.below(4);
                let mut ids: Vec<usize> = (0..len).map(|_| 2 + rng.below(6)).collect();
                let at = rng.below(len);
                ids[at] = 8 + y;
                ids.resize(max_len, PAD);
                (TokenSequence { ids, true_length: len }, y)
            })
            .collect()
    }

    fn small(kind: SeqKind) -> SeqConfig {
        SeqConfig {
            epochs: 30,
            batch_size: 16,
            max_len: 8,
            embed_dim: 8,
            hidden: 12,
            n_layers: if kind == SeqKind::Lstm { 2 } else { 1 },
            n_heads: 2,
            patience: 30,
            learning_rate: Some(if kind == SeqKind::Lstm { 0.5 } else { 0.1 }),
            ..Default::default()
        }
    }

    #[test]
    fn both_models_learn_marker_tokens() {
        let train_set = markers(240, 3, 1, 8);
        let val = markers(60, 3, 2, 8);
        for kind in [SeqKind::Lstm, SeqKind::Transformer] {
            let out = train(kind, &train_set, &val, 11, 3, &small(kind)).unwrap();
            let (_, acc) = evaluate(&out.model, &val).unwrap();
            assert!(acc >= 0.95, "{kind:?}: {acc} {:?}", out.history.last());
            assert!(out.model.embed().row(PAD).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_patience_stops_at_first_non_improvement() {
        let train_set = markers(60, 3, 3, 8);
        let val = markers(30, 3, 4, 8);
        let cfg = SeqConfig {
            patience: 0,
            learning_rate: Some(3.0),
            epochs: 40,
            ..small(SeqKind::Lstm)
        };
        let out = train(SeqKind::Lstm, &train_set, &val, 11, 3, &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|r| r.val_loss.unwrap()).collect();
        if out.stopped_early {
            let last = losses.len() - 1;
            assert!(losses[last] >= losses[..last].iter().cloned().fold(f64::INFINITY, f64::min));
            assert!(losses[..last].windows(2).all(|w| w[1] < w[0]));
            assert_eq!(out.best_epoch, last);
        } else {
            assert!(losses.windows(2).all(|w| w[1] < w[0]));
        }
    }

    #[test]
    fn histories_repeat_exactly() {
        let train_set = markers(50, 3, 5, 8);
        let val = markers(20, 3, 6, 8);
        for kind in [SeqKind::Lstm, SeqKind::Transformer] {
            let cfg = SeqConfig {
                epochs: 3,
                ..small(kind)
            };
            let a = train(kind, &train_set, &val, 11, 3, &cfg).unwrap();
            let b = train(kind, &train_set, &val, 11, 3, &cfg).unwrap();
            assert_eq!(a.history, b.history);
            assert_eq!(a.model, b.model);
        }
    }

    #[test]
    fn divergence_reports_a_finite_model() {
        let train_set = markers(40, 3, 7, 8);
        let cfg = SeqConfig {
            learning_rate: Some(1e300),
            clip_norm: 1e300,
            epochs: 5,
            ..small(SeqKind::Lstm)
        };
        match train(SeqKind::Lstm, &train_set, &[], 11, 3, &cfg) {
            Err(TrainFailure::Diverged(d)) => {
                assert!(d.last_finite.is_finite());
                assert!(TrainFailure::Diverged(d).to_string().contains("epoch"));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
