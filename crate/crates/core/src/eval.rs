//! Binary classification metrics and ROC analysis. The healthy state is the positive class.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }

    /// The same predictions seen with the other class as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

pub fn confusion(truth: &[bool], predicted: &[bool]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Usage(format!(
            "{} truth labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<T> {
    pub accuracy: T,
    pub recall_pos: T,
    pub recall_neg: T,
    pub precision_pos: T,
    pub precision_neg: T,
    pub f_pos: T,
    pub f_neg: T,
    pub auc: Option<T>,
    /// Metrics whose defining ratio was 0/0 and were reported as 0.
    pub degenerate: Vec<String>,
}

fn ratio<T: Scalar>(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> T {
    if den == 0 {
        flags.push(name.to_string());
        T::zero()
    } else {
        T::from_count(num) / T::from_count(den)
    }
}

fn harmonic<T: Scalar>(p: T, r: T, name: &str, flags: &mut Vec<String>) -> T {
    let s = p + r;
    if s == T::zero() {
        flags.push(name.to_string());
        T::zero()
    } else {
        T::lit(2.0) * p * r / s
    }
}

/// Accuracy, per-class recall and precision, and their harmonic means.
pub fn metrics<T: Scalar>(cm: &ConfusionMatrix) -> MetricReport<T> {
    let mut flags = Vec::new();
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), "accuracy", &mut flags);
    let recall_pos = ratio(cm.tp, cm.tp + cm.fn_, "recall_pos", &mut flags);
    let recall_neg = ratio(cm.tn, cm.tn + cm.fp, "recall_neg", &mut flags);
    let precision_pos = ratio(cm.tp, cm.tp + cm.fp, "precision_pos", &mut flags);
    let precision_neg = ratio(cm.tn, cm.tn + cm.fn_, "precision_neg", &mut flags);
    let f_pos = harmonic(precision_pos, recall_pos, "f_pos", &mut flags);
    let f_neg = harmonic(precision_neg, recall_neg, "f_neg", &mut flags);
    MetricReport {
        accuracy,
        recall_pos,
        recall_neg,
        precision_pos,
        precision_neg,
        f_pos,
        f_neg,
        auc: None,
        degenerate: flags,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub fpr: T,
    pub tpr: T,
    /// Rows scoring at least this value are predicted positive.
    pub threshold: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve<T> {
    /// Starts at (0, 0) with an infinite threshold and ends at (1, 1).
    pub points: Vec<RocPoint<T>>,
    pub auc: T,
}

/// Exact threshold sweep over the distinct scores; tied scores move the curve
/// in a single diagonal step.
pub fn roc_auc<T: Scalar>(scores: &[T], truth: &[bool]) -> Result<RocCurve<T>> {
    if scores.len() != truth.len() {
        return Err(Error::Usage(format!(
            "{} scores but {} truth labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Usage("NaN score".into()));
    }
    let p = truth.iter().filter(|&&t| t).count();
    let n = truth.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Usage("ROC needs both classes in the truth labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));

    let (pf, nf) = (T::from_count(p), T::from_count(n));
    let mut points = vec![RocPoint {
        fpr: T::zero(),
        tpr: T::zero(),
        threshold: T::infinity(),
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Twice the area in units of one positive-negative pair.
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - fp0) * (tp + tp0)) as u128;
        points.push(RocPoint {
            fpr: T::from_count(fp) / nf,
            tpr: T::from_count(tp) / pf,
            threshold: s,
        });
    }
    let auc = T::lit(area2 as f64) / (T::lit(2.0) * pf * nf);
    Ok(RocCurve { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn perfect_and_all_positive_counts() {
        let truth = [true, true, true, true, true, false, false, false, false, false];
        let cm = confusion(&truth, &truth).unwrap();
        assert_eq!((cm.tp, cm.tn, cm.fp, cm.fn_), (5, 5, 0, 0));
        let cm = confusion(&truth, &[true; 10]).unwrap();
        assert_eq!((cm.tp, cm.fp, cm.tn, cm.fn_), (5, 5, 0, 0));
        assert!(confusion(&truth, &[true; 3]).is_err());
    }

    #[test]
    fn all_correct_gives_ones() {
        let m = metrics::<f64>(&ConfusionMatrix {
            tp: 50,
            fp: 0,
            tn: 50,
            fn_: 0,
        });
        for v in [
            m.accuracy,
            m.recall_pos,
            m.recall_neg,
            m.precision_pos,
            m.precision_neg,
            m.f_pos,
            m.f_neg,
        ] {
            assert_eq!(v, 1.0);
        }
        assert!(m.degenerate.is_empty());
    }

    #[test]
    fn published_svm_row() {
        let m = metrics::<f64>(&ConfusionMatrix {
            tp: 500,
            fp: 8,
            tn: 492,
            fn_: 0,
        });
        assert!(close(m.accuracy, 0.992, 5e-5));
        assert!(close(m.recall_pos, 1.0, 5e-5));
        assert!(close(m.recall_neg, 0.984, 5e-5));
        assert!(close(m.precision_pos, 0.9843, 5e-5));
        assert!(close(m.f_pos, 0.9921, 5e-5));
        assert!(close(m.f_neg, 0.9919, 5e-5));
    }

    #[test]
    fn missing_positive_predictions_flagged() {
        let m = metrics::<f64>(&ConfusionMatrix {
            tp: 0,
            fp: 0,
            tn: 10,
            fn_: 10,
        });
        assert_eq!(m.recall_pos, 0.0);
        assert_eq!(m.precision_pos, 0.0);
        assert_eq!(m.accuracy, 0.5);
        assert!(m.degenerate.contains(&"precision_pos".to_string()));
        assert!(m.degenerate.contains(&"f_pos".to_string()));
        assert!(!m.degenerate.contains(&"recall_pos".to_string()));
    }

    #[test]
    fn empty_matrix_is_all_flagged_zeros() {
        let m = metrics::<f32>(&ConfusionMatrix::default());
        assert_eq!(m.accuracy, 0.0);
        assert_eq!(m.degenerate.len(), 7);
    }

    #[test]
    fn auc_ordered_inverted_and_worked_example() {
        let truth = [true, true, false, false];
        assert_eq!(roc_auc(&[4.0, 3.0, 2.0, 1.0], &truth).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[1.0, 2.0, 3.0, 4.0], &truth).unwrap().auc, 0.0);
        let r = roc_auc(&[0.9, 0.8, 0.7, 0.6], &[true, false, true, false]).unwrap();
        assert_eq!(r.auc, 0.75);
        assert_eq!(r.points.len(), 5);
        assert_eq!(r.points[0].threshold, f64::INFINITY);
        assert_eq!((r.points[4].fpr, r.points[4].tpr), (1.0, 1.0));
    }

    #[test]
    fn auc_from_hard_labels_of_published_row() {
        let mut truth = vec![true; 500];
        truth.extend(vec![false; 500]);
        let mut pred = vec![1.0f64; 500];
        pred.extend((0..500).map(|i| if i < 8 { 1.0 } else { 0.0 }));
        let r = roc_auc(&pred, &truth).unwrap();
        assert!(close(r.auc, 0.992, 1e-12));
    }

    #[test]
    fn roc_rejects_single_class_and_nan() {
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(roc_auc(&[0.1, f64::NAN], &[true, false]).is_err());
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    fn concordance(scores: &[f64], truth: &[bool]) -> f64 {
        let mut credit = 0.0;
        let mut pairs = 0.0;
        for (i, &ti) in truth.iter().enumerate() {
            for (j, &tj) in truth.iter().enumerate() {
                if ti && !tj {
                    pairs += 1.0;
                    credit += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        Ordering::Greater => 1.0,
                        Ordering::Equal => 0.5,
                        Ordering::Less => 0.0,
                    };
                }
            }
        }
        credit / pairs
    }

    fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0u8..8, any::<bool>()), 2..50)
            .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
            .prop_map(|v| {
                (
                    v.iter().map(|x| f64::from(x.0) / 8.0).collect(),
                    v.iter().map(|x| x.1).collect(),
                )
            })
    }

    fn cm_strategy() -> impl Strategy<Value = ConfusionMatrix> {
        (0usize..100, 0usize..100, 0usize..100, 0usize..100).prop_map(|(tp, fp, tn, fn_)| ConfusionMatrix {
            tp,
            fp,
            tn,
            fn_,
        })
    }

    proptest! {
        #[test]
        fn auc_is_pairwise_concordance((scores, truth) in labelled()) {
            let auc = roc_auc(&scores, &truth).unwrap().auc;
            prop_assert!((auc - concordance(&scores, &truth)).abs() <= 1e-12);
        }

        #[test]
        fn auc_ignores_monotone_transforms((scores, truth) in labelled()) {
            let a = roc_auc(&scores, &truth).unwrap().auc;
            let moved: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(a, roc_auc(&moved, &truth).unwrap().auc);
        }

        #[test]
        fn swapping_classes_swaps_metrics(cm in cm_strategy()) {
            let a = metrics::<f64>(&cm);
            let b = metrics::<f64>(&cm.swapped());
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert_eq!(a.recall_pos, b.recall_neg);
            prop_assert_eq!(a.recall_neg, b.recall_pos);
            prop_assert_eq!(a.precision_pos, b.precision_neg);
            prop_assert_eq!(a.precision_neg, b.precision_pos);
            prop_assert_eq!(a.f_pos, b.f_neg);
            prop_assert_eq!(a.f_neg, b.f_pos);
        }

        #[test]
        fn accuracy_decomposes_over_classes(cm in cm_strategy()) {
            prop_assume!(cm.positives() > 0 && cm.negatives() > 0);
            let m = metrics::<f64>(&cm);
            let p = cm.positives() as f64;
            let n = cm.negatives() as f64;
            prop_assert!((m.accuracy - (m.recall_pos * p + m.recall_neg * n) / (p + n)).abs() <= 1e-12);
            for v in [m.accuracy, m.recall_pos, m.recall_neg, m.precision_pos, m.precision_neg, m.f_pos, m.f_neg] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
