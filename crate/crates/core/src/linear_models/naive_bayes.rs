use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::numeric::{argmax, DenseMatrix};

/// Multinomial naive Bayes with additive (Laplace) smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// `ln P(C_k)`
    log_prior: Vec<f64>,
    /// `ln P(x_t | C_k)`, one row per class.
    log_likelihood: DenseMatrix,
    alpha: f64,
}

/// Fit on per-document term counts. `labels` names the classes; every one
/// of them needs at least one training document.
///
/// `log_prior[k] = ln(n_k / N)` and
/// `log_likelihood[k][t] = ln((count(t, k) + α) / (total_k + α·V))`.
pub fn nb_fit(x: &[SparseVector], y: &[usize], labels: &[String], n_features: usize, alpha: f64) -> Result<NaiveBayesModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("smoothing alpha must be positive, got {alpha}")));
    }
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.is_empty() || labels.is_empty() || n_features == 0 {
        return Err(Error::Invalid("naive Bayes needs documents, labels and features".into()));
    }
    let k = labels.len();
    let mut docs = vec![0usize; k];
    let mut counts = DenseMatrix::zeros(k, n_features);
    for (xi, &yi) in x.iter().zip(y) {
        if yi >= k {
            return Err(Error::Invalid(format!("label {yi} out of range for {k} classes")));
        }
        docs[yi] += 1;
        let row = counts.row_mut(yi);
        for &(t, c) in xi.entries() {
            if t >= n_features {
                return Err(Error::Dimension {
                    expected: n_features,
                    actual: t + 1,
                });
            }
            row[t] += c;
        }
    }
    if let Some(missing) = docs.iter().position(|&d| d == 0) {
        return Err(Error::MissingClass(labels[missing].clone()));
    }

    let n = x.len() as f64;
    let log_prior = docs.iter().map(|&d| (d as f64 / n).ln()).collect();
    let mut log_likelihood = counts;
    let v = n_features as f64;
    for c in 0..k {
        let row = log_likelihood.row_mut(c);
        let denom = (row.iter().sum::<f64>() + alpha * v).ln();
        row.iter_mut().for_each(|cnt| *cnt = (*cnt + alpha).ln() - denom);
    }
    Ok(NaiveBayesModel {
        log_prior,
        log_likelihood,
        alpha,
    })
}

impl NaiveBayesModel {
    pub fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    pub fn n_features(&self) -> usize {
        self.log_likelihood.cols()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_likelihood(&self, class: usize, feature: usize) -> f64 {
        self.log_likelihood.get(class, feature)
    }

    /// Unnormalized log posteriors `ln P(C_k) + Σ_t n_t ln P(x_t | C_k)`.
    /// Features outside the fitted space are ignored.
    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_classes())
            .map(|k| {
                let row = self.log_likelihood.row(k);
                let data: f64 = x
                    .entries()
                    .iter()
                    .filter(|e| e.0 < row.len())
                    .map(|&(t, c)| c * row[t])
                    .sum();
                self.log_prior[k] + data
            })
            .collect()
    }

    /// Class with the highest posterior (ties to the lowest id) and the
    /// per-class log posteriors up to a shared constant.
    pub fn predict(&self, x: &SparseVector) -> (usize, Vec<f64>) {
        let s = self.scores(x);
        (argmax(&s), s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(e: &[(usize, f64)]) -> SparseVector {
        SparseVector::new(e.to_vec()).unwrap()
    }

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn smoothing_by_hand() {
        // c0: {a, a, b}; c1: {b}; feature a = 0, b = 1.
        let x = vec![sv(&[(0, 2.0), (1, 1.0)]), sv(&[(1, 1.0)])];
        let m = nb_fit(&x, &[0, 1], &labels(2), 2, 1.0).unwrap();
        assert!((m.log_likelihood(0, 0).exp() - 0.6).abs() < 1e-15);
        assert!((m.log_likelihood(1, 1).exp() - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.log_prior()[0] - 0.5f64.ln()).abs() < 1e-15);

        // Query {a}: ln .5 + ln .6 versus ln .5 + ln(1/3).
        let (class, s) = m.predict(&sv(&[(0, 1.0)]));
        assert_eq!(class, 0);
        assert!((s[0] - (0.5f64.ln() + 0.6f64.ln())).abs() < 1e-15);
        assert!((s[1] - (0.5f64.ln() + (1.0f64 / 3.0).ln())).abs() < 1e-15);
    }

    #[test]
    fn empty_query_uses_priors() {
        let x = vec![sv(&[(0, 1.0)]), sv(&[(1, 1.0)]), sv(&[(1, 2.0)])];
        let m = nb_fit(&x, &[0, 1, 1], &labels(2), 2, 1.0).unwrap();
        let (class, s) = m.predict(&SparseVector::default());
        assert_eq!(class, 1);
        assert_eq!(s, m.log_prior());
    }

    #[test]
    fn symmetric_model_ties_to_class_zero() {
        let x = vec![sv(&[(0, 1.0)]), sv(&[(0, 1.0)])];
        let m = nb_fit(&x, &[0, 1], &labels(2), 1, 1.0).unwrap();
        assert_eq!(m.predict(&sv(&[(0, 3.0)])).0, 0);
    }

    #[test]
    fn single_class_always_wins() {
        let x = vec![sv(&[(0, 1.0)]), sv(&[(1, 4.0)])];
        let m = nb_fit(&x, &[0, 0], &labels(1), 2, 1.0).unwrap();
        for q in [sv(&[]), sv(&[(0, 9.0)]), sv(&[(1, 1.0)])] {
            assert_eq!(m.predict(&q).0, 0);
        }
    }

    #[test]
    fn large_alpha_flattens_likelihoods() {
        let x = vec![sv(&[(0, 5.0)]), sv(&[(1, 5.0)])];
        let m = nb_fit(&x, &[0, 1], &labels(2), 2, 1e9).unwrap();
        for k in 0..2 {
            for t in 0..2 {
                assert!((m.log_likelihood(k, t).exp() - 0.5).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn missing_class_is_named() {
        let x = vec![sv(&[(0, 1.0)])];
        let err = nb_fit(&x, &[0], &["Thai".into(), "Greek".into()], 1, 1.0).unwrap_err();
        assert!(matches!(err, Error::MissingClass(ref c) if c == "Greek"));
    }

    #[test]
    fn likelihood_rows_normalize() {
        let mut rng = crate::numeric::Prng::new(5);
        let x: Vec<SparseVector> = (0..40)
            .map(|_| {
                let e: Vec<(usize, f64)> = (0..7).filter_map(|t| (rng.below(2) == 0).then(|| (t, (1 + rng.below(4)) as f64))).collect();
                sv(&e)
            })
            .collect();
        let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
        let m = nb_fit(&x, &y, &labels(3), 7, 0.5).unwrap();
        assert!((m.log_prior().iter().map(|p| p.exp()).sum::<f64>() - 1.0).abs() < 1e-9);
        for k in 0..3 {
            let s: f64 = (0..7).map(|t| m.log_likelihood(k, t).exp()).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
