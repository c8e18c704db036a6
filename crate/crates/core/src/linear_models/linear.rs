use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::numeric::{argmax, log_softmax, sigmoid, softmax, softplus, DenseMatrix, Differentiable, ParamGroup, Prng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearKind {
    Logreg,
    Svm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Multiclass {
    /// K independent binary problems.
    #[default]
    OneVsRest,
    /// A single softmax over the K scores (logistic regression only).
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearConfig {
    pub learning_rate: f64,
    /// Per-epoch decay: `lr_e = lr / (1 + decay · e)`.
    pub decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 strength on the non-intercept weights.
    pub lambda: f64,
    pub seed: u64,
    pub multiclass: Multiclass,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            decay: 0.0,
            epochs: 30,
            batch_size: 32,
            lambda: 1e-5,
            seed: 42,
            multiclass: Multiclass::OneVsRest,
        }
    }
}

/// `K × (M + 1)` coefficients; column 0 holds the intercepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    kind: LinearKind,
    multiclass: Multiclass,
    beta: DenseMatrix,
    lambda: f64,
}

impl LinearModel {
    pub fn zeros(kind: LinearKind, n_classes: usize, n_features: usize, lambda: f64) -> Self {
        Self {
            kind,
            multiclass: Multiclass::OneVsRest,
            beta: DenseMatrix::zeros(n_classes, n_features + 1),
            lambda,
        }
    }

    pub fn from_beta(kind: LinearKind, beta: DenseMatrix, lambda: f64) -> Self {
        Self {
            kind,
            multiclass: Multiclass::OneVsRest,
            beta,
            lambda,
        }
    }

    pub fn with_multiclass(mut self, multiclass: Multiclass) -> Self {
        self.multiclass = multiclass;
        self
    }

    pub fn kind(&self) -> LinearKind {
        self.kind
    }

    pub fn beta(&self) -> &DenseMatrix {
        &self.beta
    }

    pub fn n_classes(&self) -> usize {
        self.beta.rows()
    }

    pub fn n_features(&self) -> usize {
        self.beta.cols() - 1
    }

    fn check_dim(&self, x: &SparseVector) -> Result<()> {
        match x.max_index() {
            Some(i) if i >= self.n_features() => Err(Error::Dimension {
                expected: self.n_features(),
                actual: i + 1,
            }),
            _ => Ok(()),
        }
    }

    #[inline]
    fn score_row(row: &[f64], x: &SparseVector) -> f64 {
        row[0] + x.entries().iter().map(|&(m, v)| v * row[m + 1]).sum::<f64>()
    }

    /// `f(k) = β_{0,k} + Σ_m β_{m,k} x_m` for every class.
    pub fn scores(&self, x: &SparseVector) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok((0..self.n_classes()).map(|k| Self::score_row(self.beta.row(k), x)).collect())
    }

    /// Prediction from the raw scores plus a probability vector for loss
    /// reporting: renormalized per-class sigmoids (one-vs-rest) or a
    /// softmax.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<(usize, Vec<f64>)> {
        let s = self.scores(x)?;
        let class = argmax(&s);
        let probs = match self.multiclass {
            Multiclass::Softmax => softmax(&s),
            Multiclass::OneVsRest => {
                let sig: Vec<f64> = s.iter().map(|&f| sigmoid(f)).collect();
                let z: f64 = sig.iter().sum();
                if z > 0.0 {
                    sig.iter().map(|p| p / z).collect()
                } else {
                    // Every sigmoid underflowed; fall back to a softmax of the scores.
                    softmax(&s)
                }
            }
        };
        Ok((class, probs))
    }

    /// Raw one-vs-all confidence scores; the largest wins.
    pub fn decision(&self, x: &SparseVector) -> Result<(usize, Vec<f64>)> {
        let s = self.scores(x)?;
        Ok((argmax(&s), s))
    }
}

/// Loss and its derivative with respect to the score for one binary
/// sub-problem.
#[inline]
fn binary_loss(kind: LinearKind, f: f64, positive: bool) -> (f64, f64) {
    match kind {
        // -[y ln σ(f) + (1-y) ln(1-σ(f))]
        LinearKind::Logreg => {
            let y = if positive { 1.0 } else { 0.0 };
            let loss = if positive { softplus(-f) } else { softplus(f) };
            (loss, sigmoid(f) - y)
        }
        // max(0, 1 - y f)
        LinearKind::Svm => {
            let y = if positive { 1.0 } else { -1.0 };
            let margin = 1.0 - y * f;
            if margin > 0.0 {
                (margin, -y)
            } else {
                (0.0, 0.0)
            }
        }
    }
}

fn validate(x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize, config: &LinearConfig) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if n_classes < 2 {
        return Err(Error::Invalid("linear models need at least two classes".into()));
    }
    if x.is_empty() {
        return Err(Error::Invalid("no training examples".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(Error::Invalid(format!("label {bad} out of range for {n_classes} classes")));
    }
    if let Some(m) = x.iter().filter_map(SparseVector::max_index).max() {
        if m >= n_features {
            return Err(Error::Dimension {
                expected: n_features,
                actual: m + 1,
            });
        }
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config("epochs and batch_size must be positive".into()));
    }
    if !(config.learning_rate > 0.0) || !(config.lambda >= 0.0) {
        return Err(Error::Config("learning_rate must be positive and lambda non-negative".into()));
    }
    if config.learning_rate * config.lambda >= 1.0 {
        return Err(Error::Config(format!(
            "learning_rate · lambda = {} must stay below 1 for the weight decay step",
            config.learning_rate * config.lambda
        )));
    }
    Ok(())
}

/// One-vs-rest logistic regression on L2-regularized binary cross-entropy
/// (or a joint softmax when configured).
pub fn logreg_fit(x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize, config: &LinearConfig) -> Result<LinearModel> {
    fit(LinearKind::Logreg, x, y, n_classes, n_features, config)
}

/// One-vs-all linear SVMs on L2-regularized hinge loss.
pub fn svm_fit(x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize, config: &LinearConfig) -> Result<LinearModel> {
    if config.multiclass == Multiclass::Softmax {
        return Err(Error::Config("the SVM is one-vs-all only".into()));
    }
    fit(LinearKind::Svm, x, y, n_classes, n_features, config)
}

fn fit(kind: LinearKind, x: &[SparseVector], y: &[usize], n_classes: usize, n_features: usize, config: &LinearConfig) -> Result<LinearModel> {
    validate(x, y, n_classes, n_features, config)?;
    let beta = match config.multiclass {
        Multiclass::OneVsRest => {
            let rows: Vec<Vec<f64>> = (0..n_classes)
                .into_par_iter()
                .map(|k| train_binary(kind, x, y, k, n_features, config))
                .collect::<Result<_>>()?;
            DenseMatrix::from_rows(&rows)?
        }
        Multiclass::Softmax => train_softmax(x, y, n_classes, n_features, config)?,
    };
    Ok(LinearModel {
        kind,
        multiclass: config.multiclass,
        beta,
        lambda: config.lambda,
    })
}

/// Weights kept as `scale · v` so the L2 shrink `w ← (1 − lr·λ) w` costs
/// O(1) per step instead of O(M).
struct ScaledWeights {
    scale: f64,
    v: Vec<f64>,
}

impl ScaledWeights {
    fn new(m: usize) -> Self {
        Self {
            scale: 1.0,
            v: vec![0.0; m],
        }
    }

    #[inline]
    fn dot(&self, x: &SparseVector) -> f64 {
        self.scale * x.entries().iter().map(|&(m, v)| v * self.v[m]).sum::<f64>()
    }

    /// `w ← factor · w`
    fn shrink(&mut self, factor: f64) {
        self.scale *= factor;
        if self.scale < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|w| *w *= s);
            self.scale = 1.0;
        }
    }

    #[inline]
    fn add(&mut self, step: f64, x: &SparseVector) {
        let c = step / self.scale;
        for &(m, v) in x.entries() {
            self.v[m] += c * v;
        }
    }

    fn materialize(&self) -> Vec<f64> {
        self.v.iter().map(|w| w * self.scale).collect()
    }
}

fn train_binary(kind: LinearKind, x: &[SparseVector], y: &[usize], class: usize, n_features: usize, config: &LinearConfig) -> Result<Vec<f64>> {
    let mut rng = Prng::derive(config.seed, class as u64);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut w = ScaledWeights::new(n_features);
    let mut bias = 0.0;
    let mut grads = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate / (1.0 + config.decay * epoch as f64);
        rng.shuffle(&mut order);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let inv = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            grads.clear();
            for &i in batch {
                let f = bias + w.dot(&x[i]);
                let (l, d) = binary_loss(kind, f, y[i] == class);
                batch_loss += l;
                grads.push((i, d));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "class {class}, epoch {epoch}, batch {b}: loss {batch_loss}"
                )));
            }
            w.shrink(1.0 - lr * config.lambda);
            let mut gb = 0.0;
            for &(i, d) in &grads {
                if d != 0.0 {
                    w.add(-lr * inv * d, &x[i]);
                    gb += d;
                }
            }
            bias -= lr * inv * gb;
        }
    }
    let mut row = Vec::with_capacity(n_features + 1);
    row.push(bias);
    row.extend(w.materialize());
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(format!("class {class}: non-finite weights")));
    }
    Ok(row)
}

fn train_softmax(x: &[SparseVector], y: &[usize], k: usize, n_features: usize, config: &LinearConfig) -> Result<DenseMatrix> {
    let mut rng = Prng::new(config.seed);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut w: Vec<ScaledWeights> = (0..k).map(|_| ScaledWeights::new(n_features)).collect();
    let mut bias = vec![0.0; k];
    for epoch in 0..config.epochs {
        let lr = config.learning_rate / (1.0 + config.decay * epoch as f64);
        rng.shuffle(&mut order);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let inv = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            let mut deltas = Vec::with_capacity(batch.len());
            for &i in batch {
                let s: Vec<f64> = (0..k).map(|c| bias[c] + w[c].dot(&x[i])).collect();
                let lp = log_softmax(&s);
                batch_loss -= lp[y[i]];
                let mut d: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                d[y[i]] -= 1.0;
                deltas.push((i, d));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}, batch {b}: loss {batch_loss}")));
            }
            for c in 0..k {
                w[c].shrink(1.0 - lr * config.lambda);
                let mut gb = 0.0;
                for (i, d) in &deltas {
                    w[c].add(-lr * inv * d[c], &x[*i]);
                    gb += d[c];
                }
                bias[c] -= lr * inv * gb;
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|c| std::iter::once(bias[c]).chain(w[c].materialize()).collect())
        .collect();
    DenseMatrix::from_rows(&rows)
}

/// The training objective on a fixed batch, summed over the K binary
/// sub-problems: `Σ_k [mean_i ℓ(y_ik, f_k(x_i)) + λ/2 ‖β_k‖²]` with the
/// intercepts unregularized. For the softmax variant it is the mean
/// cross-entropy plus the same penalty.
impl Differentiable for LinearModel {
    type Input = [(SparseVector, usize)];

    fn param_groups(&self) -> Vec<ParamGroup> {
        vec![ParamGroup::new("beta", self.beta.as_slice().len())]
    }

    fn params(&self) -> Vec<f64> {
        self.beta.as_slice().to_vec()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.beta.as_mut_slice().copy_from_slice(params);
    }

    fn loss(&self, batch: &Self::Input) -> Result<f64> {
        let inv = 1.0 / batch.len() as f64;
        let mut data = 0.0;
        for (x, y) in batch {
            let s = self.scores(x)?;
            data += match self.multiclass {
                Multiclass::Softmax => -log_softmax(&s)[*y],
                Multiclass::OneVsRest => s.iter().enumerate().map(|(k, &f)| binary_loss(self.kind, f, k == *y).0).sum(),
            };
        }
        let penalty: f64 = (0..self.n_classes())
            .map(|k| self.beta.row(k)[1..].iter().map(|w| w * w).sum::<f64>())
            .sum();
        Ok(inv * data + 0.5 * self.lambda * penalty)
    }

    fn gradient(&self, batch: &Self::Input) -> Result<Vec<f64>> {
        let inv = 1.0 / batch.len() as f64;
        let mut g = DenseMatrix::zeros(self.beta.rows(), self.beta.cols());
        for (x, y) in batch {
            let s = self.scores(x)?;
            let d: Vec<f64> = match self.multiclass {
                Multiclass::Softmax => {
                    let mut p = softmax(&s);
                    p[*y] -= 1.0;
                    p
                }
                Multiclass::OneVsRest => s.iter().enumerate().map(|(k, &f)| binary_loss(self.kind, f, k == *y).1).collect(),
            };
            for (k, dk) in d.iter().enumerate() {
                let row = g.row_mut(k);
                row[0] += inv * dk;
                for &(m, v) in x.entries() {
                    row[m + 1] += inv * dk * v;
                }
            }
        }
        for k in 0..self.beta.rows() {
            let w = self.beta.row(k)[1..].to_vec();
            for (gm, wm) in g.row_mut(k)[1..].iter_mut().zip(w) {
                *gm += self.lambda * wm;
            }
        }
        Ok(g.as_slice().to_vec())
    }
}

/// A small random point for gradient checks: 3 classes, 7 features, 5
/// examples, `λ = 0.05`. For the SVM, draws are repeated until every margin
/// sits more than 1e-3 from its hinge kink and no gradient coordinate is
/// below 1e-6 in magnitude: hinge terms can cancel exactly in an intercept,
/// leaving a flat direction whose central difference is rounding noise.
pub fn gradcheck_fixture(kind: LinearKind, seed: u64) -> (LinearModel, Vec<(SparseVector, usize)>) {
    for attempt in 0.. {
        let mut rng = Prng::derive(seed, attempt);
        let beta = DenseMatrix::uniform(3, 8, 0.8, &mut rng);
        let m = LinearModel::from_beta(kind, beta, 0.05);
        let batch: Vec<(SparseVector, usize)> = (0..5)
            .map(|i| {
                let e: Vec<(usize, f64)> = (0..7).filter_map(|f| (rng.below(3) > 0).then(|| (f, rng.uniform(-1.0, 1.0)))).collect();
                (SparseVector::new(e).expect("increasing indices"), i % 3)
            })
            .collect();
        if kind == LinearKind::Logreg {
            return (m, batch);
        }
        let clear = batch.iter().all(|(x, y)| {
            m.scores(x).expect("in range").iter().enumerate().all(|(k, f)| {
                let t = if k == *y { 1.0 } else { -1.0 };
                (1.0 - t * f).abs() > 1e-3
            })
        });
        let flat = m.gradient(&batch).expect("in range").iter().any(|g| g.abs() < 1e-6);
        if clear && !flat {
            return (m, batch);
        }
    }
    unreachable!("the attempt counter is unbounded")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, GradCheckConfig};

    fn sv(e: &[(usize, f64)]) -> SparseVector {
        SparseVector::new(e.to_vec()).unwrap()
    }

    /// Two classes, each with an exclusive feature plus shared noise.
    fn separable(n: usize, seed: u64) -> (Vec<SparseVector>, Vec<usize>) {
        let mut rng = Prng::new(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let mut e = vec![(c, 1.0)];
            for f in 2..6 {
                if rng.below(2) == 0 {
                    e.push((f, rng.uniform(0.1, 1.0)));
                }
            }
            let norm = e.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt();
            x.push(sv(&e.iter().map(|&(f, v)| (f, v / norm)).collect::<Vec<_>>()));
            y.push(c);
        }
        (x, y)
    }

    fn accuracy(m: &LinearModel, x: &[SparseVector], y: &[usize]) -> f64 {
        let hits = x.iter().zip(y).filter(|(xi, &yi)| m.decision(xi).unwrap().0 == yi).count();
        hits as f64 / x.len() as f64
    }

    #[test]
    fn logreg_separates_marker_features() {
        let (x, y) = separable(200, 1);
        let m = logreg_fit(&x, &y, 2, 6, &LinearConfig { epochs: 100, ..Default::default() }).unwrap();
        assert!(accuracy(&m, &x, &y) >= 0.99);
    }

    #[test]
    fn softmax_variant_also_separates() {
        let (x, y) = separable(200, 2);
        let cfg = LinearConfig {
            multiclass: Multiclass::Softmax,
            epochs: 50,
            ..Default::default()
        };
        let m = logreg_fit(&x, &y, 2, 6, &cfg).unwrap();
        assert!(accuracy(&m, &x, &y) >= 0.99);
        let p = m.predict_proba(&x[0]).unwrap().1;
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_learns_class_frequency() {
        // 3 classes at frequencies .5/.3/.2; every input identical.
        let x: Vec<SparseVector> = (0..100).map(|_| sv(&[(0, 1.0)])).collect();
        let y: Vec<usize> = (0..100).map(|i| if i < 50 { 0 } else if i < 80 { 1 } else { 2 }).collect();
        let cfg = LinearConfig {
            epochs: 500,
            lambda: 0.0,
            learning_rate: 0.5,
            batch_size: 100,
            ..Default::default()
        };
        let m = logreg_fit(&x, &y, 3, 1, &cfg).unwrap();
        let s = m.scores(&x[0]).unwrap();
        for (f, want) in s.iter().zip([0.5, 0.3, 0.2]) {
            assert!((sigmoid(*f) - want).abs() < 0.02, "{} vs {want}", sigmoid(*f));
        }
    }

    #[test]
    fn zero_model_predictions() {
        let m = LinearModel::zeros(LinearKind::Logreg, 3, 4, 0.0);
        let (c, p) = m.predict_proba(&sv(&[(1, 0.7)])).unwrap();
        assert_eq!(c, 0);
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(m.scores(&sv(&[])).unwrap().iter().all(|&f| sigmoid(f) == 0.5));
        let svm = LinearModel::zeros(LinearKind::Svm, 3, 4, 0.0);
        assert_eq!(svm.decision(&sv(&[(2, 1.0)])).unwrap(), (0, vec![0.0; 3]));
    }

    #[test]
    fn hand_evaluated_scores() {
        let beta = DenseMatrix::from_rows(&[vec![0.5, 1.0, -1.0], vec![-0.25, 0.0, 2.0]]).unwrap();
        let m = LinearModel::from_beta(LinearKind::Logreg, beta, 0.0);
        let x = sv(&[(0, 0.6), (1, 0.8)]);
        let s = m.scores(&x).unwrap();
        assert!((s[0] - (0.5 + 0.6 - 0.8)).abs() < 1e-15);
        assert!((s[1] - (-0.25 + 1.6)).abs() < 1e-15);
        let (c, p) = m.predict_proba(&x).unwrap();
        assert_eq!(c, 1);
        let (a, b) = (sigmoid(0.3), sigmoid(1.35));
        assert!((p[1] - b / (a + b)).abs() < 1e-15);
        assert!(m.scores(&sv(&[(2, 1.0)])).is_err());
    }

    #[test]
    fn dominant_row_wins() {
        let mut beta = DenseMatrix::zeros(4, 3);
        beta.set(2, 2, 5.0);
        let m = LinearModel::from_beta(LinearKind::Svm, beta, 0.0);
        assert_eq!(m.decision(&sv(&[(1, 1.0)])).unwrap().0, 2);
    }

    #[test]
    fn scaling_input_keeps_argmax_without_intercepts() {
        let mut rng = Prng::new(8);
        let beta = DenseMatrix::uniform(4, 6, 1.0, &mut rng);
        let mut beta0 = beta.clone();
        for k in 0..4 {
            beta0.set(k, 0, 0.0);
        }
        let m = LinearModel::from_beta(LinearKind::Svm, beta0, 0.0);
        let x = sv(&[(0, 0.2), (3, -0.7), (4, 0.4)]);
        let (c, s) = m.decision(&x).unwrap();
        for scale in [0.01, 3.0, 1e4] {
            let (c2, s2) = m.decision(&x.scaled(scale)).unwrap();
            assert_eq!(c, c2);
            for (a, b) in s.iter().zip(&s2) {
                assert!((a * scale - b).abs() < 1e-9 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn svm_separates_with_margin() {
        let (x, y) = separable(200, 3);
        let m = svm_fit(&x, &y, 2, 6, &LinearConfig { epochs: 100, ..Default::default() }).unwrap();
        assert!(accuracy(&m, &x, &y) >= 0.99);
        // Margin y·f ≥ 1 on the positive-class sub-problem of each example.
        let ok = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| {
                let s = m.scores(xi).unwrap();
                (0..2).all(|k| {
                    let t = if k == yi { 1.0 } else { -1.0 };
                    t * s[k] >= 1.0 - 1e-6
                })
            })
            .count();
        assert!(ok as f64 >= 0.95 * x.len() as f64, "{ok}");
    }

    #[test]
    fn heavy_regularization_shrinks_weights() {
        let (x, y) = separable(100, 4);
        let cfg = LinearConfig {
            lambda: 500.0,
            learning_rate: 1e-3,
            epochs: 20,
            ..Default::default()
        };
        let m = svm_fit(&x, &y, 2, 6, &cfg).unwrap();
        // Each hinge subgradient coordinate is at most 1, so |w| settles below 1/λ.
        for k in 0..2 {
            assert!(m.beta().row(k)[1..].iter().all(|w| w.abs() < 2.0 / 500.0));
        }
        let free = svm_fit(&x, &y, 2, 6, &LinearConfig { epochs: 20, ..Default::default() }).unwrap();
        assert!(free.beta().row(0)[1..].iter().any(|w| w.abs() > 0.1));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (x, y) = separable(10, 5);
        let bad = LinearConfig { lambda: 3.0, ..Default::default() };
        assert!(matches!(svm_fit(&x, &y, 2, 6, &bad), Err(Error::Config(_))));
        assert!(logreg_fit(&x, &y, 1, 6, &LinearConfig::default()).is_err());
        assert!(logreg_fit(&x, &y, 2, 3, &LinearConfig::default()).is_err());
    }

    #[test]
    fn fits_are_bit_reproducible() {
        let (x, y) = separable(120, 6);
        let a = logreg_fit(&x, &y, 2, 6, &LinearConfig::default()).unwrap();
        let b = logreg_fit(&x, &y, 2, 6, &LinearConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn logreg_gradient_matches_finite_differences() {
        for seed in 0..3 {
            let (m, batch) = gradcheck_fixture(LinearKind::Logreg, seed);
            let sm = m.clone().with_multiclass(Multiclass::Softmax);
            for model in [m, sm] {
                let r = grad_check(&model, &batch[..], &GradCheckConfig::default()).unwrap();
                assert!(r.max_rel_error < 1e-6, "{r:?}");
            }
        }
    }

    #[test]
    fn svm_subgradient_matches_away_from_kinks() {
        for seed in 0..5 {
            let (m, batch) = gradcheck_fixture(LinearKind::Svm, seed);
            assert!(batch.iter().all(|(x, y)| m.scores(x).unwrap().iter().enumerate().all(|(k, f)| {
                let t = if k == *y { 1.0 } else { -1.0 };
                (1.0 - t * f).abs() > 1e-3
            })));
            let r = grad_check(&m, &batch[..], &GradCheckConfig::default()).unwrap();
            assert!(r.max_rel_error < 1e-6, "{r:?}");
        }
    }
}
