//! Confusion matrices and the accuracy / loss / precision / recall / F1
//! report, with macro and support-weighted aggregates side by side.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    rows: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            rows: vec![vec![0; k]; k],
        }
    }

    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Invalid("confusion matrix must be square".into()));
        }
        Ok(Self { rows })
    }

    pub fn n_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.rows[truth][pred]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.rows.len()).map(|k| self.rows[k][k]).sum()
    }

    pub fn support(&self, k: usize) -> u64 {
        self.rows[k].iter().sum()
    }

    pub fn predicted(&self, k: usize) -> u64 {
        self.rows.iter().map(|r| r[k]).sum()
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            actual: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::Invalid(format!("label {} out of range for {k} classes", t.max(p))));
        }
        cm.rows[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when the metric had a zero denominator and was reported as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub loss: f64,
    pub total: u64,
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: Aggregate,
    pub weighted: Aggregate,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn summarize(cm: &ConfusionMatrix, losses: &[f64]) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Invalid("cannot summarize an empty confusion matrix".into()));
    }
    let k = cm.n_classes();
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.get(c, c);
            let (precision, precision_undefined) = ratio(tp, cm.predicted(c));
            let (recall, recall_undefined) = ratio(tp, cm.support(c));
            ClassMetrics {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: cm.support(c),
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();

    let kf = k as f64;
    let macro_avg = Aggregate {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / kf,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / kf,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / kf,
    };
    let n = total as f64;
    let weighted_mean = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / n
    };
    let weighted = Aggregate {
        precision: weighted_mean(|m| m.precision),
        // support_k · tp_k / support_k reduces to tp_k, so weighted recall is
        // trace / total: the same expression as accuracy.
        recall: cm.trace() as f64 / n,
        f1: weighted_mean(|m| m.f1),
    };
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / n,
        loss: mean(losses),
        total,
        per_class,
        macro_avg,
        weighted,
        confusion: cm.clone(),
    })
}

/// The five headline numbers for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsReport {
    pub fn summary(&self, averaging: Averaging) -> Summary {
        let agg = match averaging {
            Averaging::Macro => self.macro_avg,
            Averaging::Weighted => self.weighted,
        };
        Summary {
            accuracy: self.accuracy,
            loss: self.loss,
            precision: agg.precision,
            recall: agg.recall,
            f1: agg.f1,
        }
    }

    /// Plain-text report: the headline table under both averagings, then
    /// per-class rows.
    pub fn render_text(&self, model: &str, labels: &[String]) -> String {
        let mut out = String::new();
        for avg in [Averaging::Weighted, Averaging::Macro] {
            let table = ComparisonTable {
                averaging: avg,
                columns: vec![(model.to_string(), self.summary(avg))],
            };
            out.push_str(&table.render());
            out.push('\n');
        }
        let width = labels.iter().map(String::len).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<width$}  Precision  Recall  F1 Score  Support", "Class");
        for (k, m) in self.per_class.iter().enumerate() {
            let name = labels.get(k).map_or("?", String::as_str);
            let flag = if m.precision_undefined || m.recall_undefined { " *" } else { "" };
            let _ = writeln!(
                out,
                "{name:<width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}{flag}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        if self.per_class.iter().any(|m| m.precision_undefined || m.recall_undefined) {
            out.push_str("* zero denominator; reported as 0\n");
        }
        out
    }
}

/// Models side by side in the row order Accuracy, Loss, Precision, Recall,
/// F1 Score. Accuracy is shown in percent, the rest as fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub averaging: Averaging,
    pub columns: Vec<(String, Summary)>,
}

impl ComparisonTable {
    pub const ROWS: [&'static str; 5] = ["Accuracy", "Loss", "Precision", "Recall", "F1 Score"];

    pub fn render(&self) -> String {
        let label = format!(
            "Performance Metric ({})",
            match self.averaging {
                Averaging::Macro => "macro",
                Averaging::Weighted => "weighted",
            }
        );
        let lw = label.len();
        let widths: Vec<usize> = self.columns.iter().map(|(n, _)| n.len().max(7)).collect();
        let mut out = String::new();
        let _ = write!(out, "{label:<lw$}");
        for ((name, _), w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, " | {name:>w$}");
        }
        out.push('\n');
        let _ = write!(out, "{}", "-".repeat(lw));
        for w in &widths {
            let _ = write!(out, "-+-{}", "-".repeat(*w));
        }
        out.push('\n');
        for row in Self::ROWS {
            let _ = write!(out, "{row:<lw$}");
            for ((_, s), w) in self.columns.iter().zip(&widths) {
                let v = match row {
                    "Accuracy" => s.accuracy * 100.0,
                    "Loss" => s.loss,
                    "Precision" => s.precision,
                    "Recall" => s.recall,
                    _ => s.f1,
                };
                let _ = write!(out, " | {v:>w$.2}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Prng;
    use proptest::prelude::*;

    #[test]
    fn tally_by_hand() {
        let cm = confusion(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(cm.rows(), [vec![1, 1], vec![0, 1]]);
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[0], &[2], 2).is_err());
        let perfect = confusion(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap();
        assert_eq!(perfect.trace(), perfect.total());
    }

    #[test]
    fn random_tallies_match_recount() {
        let mut rng = Prng::new(11);
        let yt: Vec<usize> = (0..500).map(|_| rng.below(4)).collect();
        let yp: Vec<usize> = (0..500).map(|_| rng.below(4)).collect();
        let cm = confusion(&yt, &yp, 4).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                let n = yt.iter().zip(&yp).filter(|(&a, &b)| a == t && b == p).count() as u64;
                assert_eq!(cm.get(t, p), n);
            }
        }
    }

    #[test]
    fn hand_computed_two_class_report() {
        let cm = ConfusionMatrix::from_rows(vec![vec![1, 1], vec![0, 1]]).unwrap();
        let r = summarize(&cm, &[0.0, 1.0, 2.0]).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.loss, 1.0);
        let c0 = &r.per_class[0];
        let c1 = &r.per_class[1];
        assert_eq!((c0.precision, c0.recall), (1.0, 0.5));
        assert_eq!((c1.precision, c1.recall), (0.5, 1.0));
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15 && (c1.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_rows(vec![vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 1]]).unwrap();
        let r = summarize(&cm, &[]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_avg, Aggregate { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(r.weighted, r.macro_avg);
    }

    #[test]
    fn zero_denominators_are_flagged_not_nan() {
        let cm = ConfusionMatrix::from_rows(vec![vec![2, 0], vec![0, 0]]).unwrap();
        let r = summarize(&cm, &[]).unwrap();
        assert!(r.per_class[1].precision_undefined && r.per_class[1].recall_undefined);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert!(r.macro_avg.precision.is_finite());
        assert!(summarize(&ConfusionMatrix::zeros(2), &[]).is_err());
    }

    #[test]
    fn table_layout_for_logreg_column() {
        let table = ComparisonTable {
            averaging: Averaging::Weighted,
            columns: vec![(
                "LogReg".into(),
                Summary {
                    accuracy: 0.5770,
                    loss: 1.51,
                    precision: 0.56,
                    recall: 0.57,
                    f1: 0.56,
                },
            )],
        };
        let text = table.render();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("LogReg"));
        let expect = [("Accuracy", "57.70"), ("Loss", "1.51"), ("Precision", "0.56"), ("Recall", "0.57"), ("F1 Score", "0.56")];
        for (line, (row, value)) in lines[2..].iter().zip(expect) {
            assert!(line.starts_with(row), "{line}");
            assert!(line.trim_end().ends_with(value), "{line}");
        }
    }

    fn arb_cm() -> impl Strategy<Value = ConfusionMatrix> {
        (1usize..8).prop_flat_map(|k| {
            proptest::collection::vec(proptest::collection::vec(0u64..50, k), k)
                .prop_filter("non-empty", |rows| rows.iter().flatten().sum::<u64>() > 0)
                .prop_map(|rows| ConfusionMatrix::from_rows(rows).unwrap())
        })
    }

    proptest! {
        #[test]
        fn weighted_recall_is_accuracy(cm in arb_cm()) {
            let r = summarize(&cm, &[]).unwrap();
            prop_assert_eq!(r.weighted.recall, r.accuracy);
        }

        #[test]
        fn f1_between_precision_and_recall(cm in arb_cm()) {
            let r = summarize(&cm, &[]).unwrap();
            for m in &r.per_class {
                let lo = m.precision.min(m.recall);
                let hi = m.precision.max(m.recall);
                prop_assert!(m.f1 >= lo - 1e-15 && m.f1 <= hi + 1e-15);
            }
        }

        #[test]
        fn relabeling_permutes_per_class(cm in arb_cm(), seed in any::<u64>()) {
            let k = cm.n_classes();
            let mut perm: Vec<usize> = (0..k).collect();
            Prng::new(seed).shuffle(&mut perm);
            let mut rows = vec![vec![0; k]; k];
            for t in 0..k {
                for p in 0..k {
                    rows[perm[t]][perm[p]] = cm.get(t, p);
                }
            }
            let a = summarize(&cm, &[]).unwrap();
            let b = summarize(&ConfusionMatrix::from_rows(rows).unwrap(), &[]).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
            for c in 0..k {
                prop_assert_eq!(&a.per_class[c], &b.per_class[perm[c]]);
            }
            prop_assert!((a.macro_avg.f1 - b.macro_avg.f1).abs() < 1e-12);
            prop_assert!((a.macro_avg.precision - b.macro_avg.precision).abs() < 1e-12);
            prop_assert!((a.macro_avg.recall - b.macro_avg.recall).abs() < 1e-12);
        }
    }
}
