//! Confusion-matrix metrics with an emphasis on the worst class.
//!
//! Zero denominators give 0 for precision, recall and F1. A class that never
//! occurs in the truth and is never predicted carries no information and is
//! left out of the macro average and the minima.
//!
//! `MetricsReport` serializes as
//! `{"accuracy", "f1_macro", "min_recall", "min_f1", "per_class": [{"precision",
//! "recall", "f1", "support", "predicted"}]}`, all rates in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::Dimension("confusion matrix must be square and non-empty".into()));
        }
        Ok(Self { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Dimension(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    if classes == 0 {
        return Err(Error::Dimension("need at least one class".into()));
    }
    let mut counts = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::Dimension(format!(
                "label pair ({t}, {p}) out of range for {classes} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True samples of this class.
    pub support: u64,
    /// Samples predicted as this class.
    pub predicted: u64,
}

impl ClassMetrics {
    /// Whether the class appears in the truth or the predictions.
    pub fn is_present(&self) -> bool {
        self.support > 0 || self.predicted > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub min_recall: f64,
    pub min_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Builds the report; an empty matrix yields all zeros.
    pub fn from_confusion(cm: &ConfusionMatrix) -> Self {
        let per_class: Vec<ClassMetrics> = (0..cm.classes())
            .map(|c| {
                let tp = cm.get(c, c);
                let support = cm.row_sum(c);
                let predicted = cm.col_sum(c);
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                    predicted,
                }
            })
            .collect();
        let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.is_present()).collect();
        let trace: u64 = (0..cm.classes()).map(|c| cm.get(c, c)).sum();
        let (f1_macro, min_recall, min_f1) = if present.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            (
                present.iter().map(|m| m.f1).sum::<f64>() / present.len() as f64,
                present.iter().map(|m| m.recall).fold(f64::INFINITY, f64::min),
                present.iter().map(|m| m.f1).fold(f64::INFINITY, f64::min),
            )
        };
        Self {
            accuracy: ratio(trace, cm.total()),
            f1_macro,
            min_recall,
            min_f1,
            per_class,
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::F1Macro => self.f1_macro,
            Metric::MinRecall => self.min_recall,
            Metric::MinF1 => self.min_f1,
        }
    }
}

pub fn report(cm: &ConfusionMatrix) -> MetricsReport {
    MetricsReport::from_confusion(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1Macro,
    MinRecall,
    MinF1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::F1Macro, Metric::MinRecall, Metric::MinF1];

    pub fn key(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::F1Macro => "f1_macro",
            Metric::MinRecall => "min_recall",
            Metric::MinF1 => "min_f1",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::Accuracy => "Accuracy",
            Metric::F1Macro => "F1(macro)",
            Metric::MinRecall => "min. recall",
            Metric::MinF1 => "min. F1",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "accuracy" | "acc" => Ok(Metric::Accuracy),
            "f1_macro" | "f1" => Ok(Metric::F1Macro),
            "min_recall" => Ok(Metric::MinRecall),
            "min_f1" => Ok(Metric::MinF1),
            other => Err(Error::Domain(format!("unknown metric `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        for t in 0..3 {
            for p in 0..3 {
                assert_eq!(cm.get(t, p), u64::from(t == p));
            }
        }
        let cm = confusion(&[0, 1, 2, 1], &[0, 0, 0, 0], 3).unwrap();
        assert_eq!(cm.col_sum(0), 4);
        assert_eq!(cm.col_sum(1) + cm.col_sum(2), 0);
        let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 2]]);
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(confusion(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn report_examples() {
        let r = report(&ConfusionMatrix::from_counts(vec![vec![3, 0], vec![0, 4]]).unwrap());
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.min_recall, 1.0);
        assert_eq!(r.min_f1, 1.0);

        let r = report(&ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 2]]).unwrap());
        assert_abs_diff_eq!(r.per_class[0].recall, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.per_class[1].recall, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.per_class[0].precision, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.per_class[1].precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.per_class[0].f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.per_class[1].f1, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(r.f1_macro, 11.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.min_recall, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.min_f1, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.accuracy, 0.75, epsilon = 1e-15);
    }

    #[test]
    fn absent_class_is_excluded() {
        let cm = ConfusionMatrix::from_counts(vec![
            vec![2, 0, 0],
            vec![0, 0, 0],
            vec![0, 0, 3],
        ])
        .unwrap();
        let r = report(&cm);
        assert!(!r.per_class[1].is_present());
        assert_eq!(r.f1_macro, 1.0);
        assert_eq!(r.min_recall, 1.0);
    }

    #[test]
    fn never_predicted_class_counts_as_zero() {
        let r = report(&ConfusionMatrix::from_counts(vec![vec![2, 0], vec![2, 0]]).unwrap());
        assert_eq!(r.per_class[1].precision, 0.0);
        assert_eq!(r.per_class[1].f1, 0.0);
        assert_eq!(r.min_recall, 0.0);
    }

    #[test]
    fn json_keys() {
        let r = report(&ConfusionMatrix::from_counts(vec![vec![1, 1], vec![0, 2]]).unwrap());
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["accuracy", "f1_macro", "min_recall", "min_f1", "per_class"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: MetricsReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
