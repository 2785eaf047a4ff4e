//! Next-activity and remaining-time evaluation metrics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::Task;
use crate::nncore::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    /// Class index, or `None` for targets outside the class space.
    pub class: Option<usize>,
    pub name: String,
    pub support: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassStats>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae_hours: f64,
    pub rmse_hours: f64,
}

/// First index of the row maximum.
pub fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy and F-scores of row-wise argmax predictions. A `None` label is
/// a target the model cannot emit: always a miss, and its own class with
/// F1 = 0 in the averages.
pub fn classification_metrics(
    logits: &Tensor,
    labels: &[Option<usize>],
    class_names: &[String],
) -> Result<ClassificationMetrics> {
    if labels.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    if logits.rows() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: logits.rows(),
            labels: labels.len(),
        });
    }
    let preds: Vec<usize> = (0..logits.rows()).map(|r| argmax(logits.row(r))).collect();
    let correct = preds.iter().zip(labels).filter(|(p, l)| Some(**p) == **l).count();

    let classes: BTreeSet<Option<usize>> = labels.iter().copied().chain(preds.iter().map(|&p| Some(p))).collect();
    let per_class: Vec<ClassStats> = classes
        .into_iter()
        .map(|class| {
            let support = labels.iter().filter(|&&l| l == class).count();
            let predicted = preds.iter().filter(|&&p| Some(p) == class).count();
            let tp = preds.iter().zip(labels).filter(|(p, l)| Some(**p) == class && **l == class).count();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = ratio(2 * tp, predicted + support);
            let name = match class {
                Some(c) => class_names.get(c).cloned().unwrap_or_else(|| format!("#{c}")),
                None => "<unseen>".to_owned(),
            };
            ClassStats { class, name, support, predicted, precision, recall, f1 }
        })
        .collect();

    let n = labels.len() as f64;
    let weighted_f1 = per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / n;
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / n,
        weighted_f1,
        macro_f1,
        per_class,
    })
}

pub fn regression_metrics(pred_hours: &[f64], label_hours: &[f64]) -> Result<RegressionMetrics> {
    if label_hours.is_empty() {
        return Err(MetricsError::EmptyEvalSet);
    }
    if pred_hours.len() != label_hours.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: pred_hours.len(),
            labels: label_hours.len(),
        });
    }
    let n = label_hours.len() as f64;
    let (abs, sq) = pred_hours
        .iter()
        .zip(label_hours)
        .fold((0.0, 0.0), |(a, s), (p, l)| (a + (p - l).abs(), s + (p - l).powi(2)));
    let mae_hours = abs / n;
    // Rounding can push sqrt(mean sq) a hair below mean |err| when all
    // errors are equal.
    let rmse_hours = (sq / n).sqrt().max(mae_hours);
    Ok(RegressionMetrics { mae_hours, rmse_hours })
}

/// Evaluation summary of one model on one partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub variant: String,
    pub partition: String,
    pub include_end: bool,
    pub num_samples: usize,
    pub num_end_samples: usize,
    pub num_unseen_targets: usize,
    /// Mean training loss of the task over the labelled samples.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub classification: Option<ClassificationMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub regression: Option<RegressionMetrics>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} / {} on {}", self.variant, self.task, self.partition);
        let _ = writeln!(
            out,
            "samples: {} (END-labelled: {}, {}; unseen targets: {})",
            self.num_samples,
            self.num_end_samples,
            if self.include_end { "included" } else { "excluded" },
            self.num_unseen_targets
        );
        let _ = writeln!(out, "loss: {:.6}", self.loss);
        if let Some(c) = &self.classification {
            let _ = writeln!(out, "accuracy: {:.4}", c.accuracy);
            let _ = writeln!(out, "F-score (weighted): {:.4}", c.weighted_f1);
            let _ = writeln!(out, "F-score (macro): {:.4}", c.macro_f1);
            let width = c.per_class.iter().map(|s| s.name.len()).max().unwrap_or(5).max(5);
            let _ = writeln!(out, "{:<width$}  {:>7}  {:>9}  {:>6}  {:>6}", "class", "support", "precision", "recall", "f1");
            for s in &c.per_class {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>7}  {:>9.4}  {:>6.4}  {:>6.4}",
                    s.name, s.support, s.precision, s.recall, s.f1
                );
            }
        }
        if let Some(r) = &self.regression {
            let _ = writeln!(out, "MAE: {:.2} h", r.mae_hours);
            let _ = writeln!(out, "RMSE: {:.2} h", r.rmse_hours);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn one_hot(preds: &[usize], k: usize) -> Tensor {
        let rows: Vec<Vec<f64>> = preds.iter().map(|&p| (0..k).map(|c| (c == p) as u8 as f64).collect()).collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let labels = [0, 1, 2, 1];
        let m = classification_metrics(&one_hot(&labels, 3), &labels.map(Some), &[]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class.iter().all(|c| c.f1 == 1.0));
        assert_eq!((m.weighted_f1, m.macro_f1), (1.0, 1.0));
    }

    #[test]
    fn binary_closed_form() {
        // TP=1, FP=1, FN=1, TN=1 for class 1.
        let preds = [1, 1, 0, 0];
        let labels = [Some(1), Some(0), Some(1), Some(0)];
        let m = classification_metrics(&one_hot(&preds, 2), &labels, &[]).unwrap();
        let c1 = m.per_class.iter().find(|c| c.class == Some(1)).unwrap();
        assert_eq!(c1.f1, 0.5);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[0.5, 2.0, 2.0, 1.0]), 1);
        assert_eq!(argmax(&[3.0, 3.0]), 0);
    }

    #[test]
    fn unseen_targets_are_misses() {
        let m = classification_metrics(&one_hot(&[0, 1], 2), &[Some(0), None], &[]).unwrap();
        assert_eq!(m.accuracy, 0.5);
        let unseen = m.per_class.iter().find(|c| c.class.is_none()).unwrap();
        assert_eq!((unseen.support, unseen.f1), (1, 0.0));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert_eq!(
            classification_metrics(&Tensor::zeros(0, 3), &[], &[]),
            Err(MetricsError::EmptyEvalSet)
        );
        assert_eq!(regression_metrics(&[], &[]), Err(MetricsError::EmptyEvalSet));
        assert!(matches!(regression_metrics(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn regression_closed_forms() {
        let r = regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((r.mae_hours, r.rmse_hours), (0.0, 0.0));
        let r = regression_metrics(&[3.0, -3.0], &[0.0, 0.0]).unwrap();
        assert_eq!((r.mae_hours, r.rmse_hours), (3.0, 3.0));
        let r = regression_metrics(&[1.0, 7.0], &[0.0, 0.0]).unwrap();
        assert_eq!(r.mae_hours, 4.0);
        assert!((r.rmse_hours - 5.0).abs() < 1e-12);
    }

    /// Confusion-matrix oracle in the usual textbook form.
    fn oracle(preds: &[usize], labels: &[usize], k: usize) -> (f64, f64, f64) {
        let mut cm = vec![vec![0usize; k]; k];
        for (&p, &l) in preds.iter().zip(labels) {
            cm[l][p] += 1;
        }
        let n = labels.len() as f64;
        let acc = (0..k).map(|i| cm[i][i]).sum::<usize>() as f64 / n;
        let mut f1s = Vec::new();
        let mut weighted = 0.0;
        for (c, cm_row) in cm.iter().enumerate() {
            let tp = cm_row[c] as f64;
            let row: f64 = cm_row.iter().sum::<usize>() as f64;
            let col: f64 = (0..k).map(|r| cm[r][c]).sum::<usize>() as f64;
            if row == 0.0 && col == 0.0 {
                continue;
            }
            let p = if col > 0.0 { tp / col } else { 0.0 };
            let r = if row > 0.0 { tp / row } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            f1s.push(f);
            weighted += f * row / n;
        }
        (acc, weighted, f1s.iter().sum::<f64>() / f1s.len() as f64)
    }

    #[test]
    fn matches_confusion_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let k = 7;
            let labels: Vec<usize> = (0..500).map(|_| rng.gen_range(0..k)).collect();
            let logits = Tensor::new(500, k, (0..500 * k).map(|_| rng.gen_range(0..4) as f64).collect()).unwrap();
            let preds: Vec<usize> = (0..500).map(|r| argmax(logits.row(r))).collect();
            let m = classification_metrics(&logits, &labels.iter().map(|&l| Some(l)).collect::<Vec<_>>(), &[]).unwrap();
            let (acc, w, mac) = oracle(&preds, &labels, k);
            assert!((m.accuracy - acc).abs() < 1e-12);
            assert!((m.weighted_f1 - w).abs() < 1e-12);
            assert!((m.macro_f1 - mac).abs() < 1e-12);
        }
    }

    #[test]
    fn report_serializes_both_ways() {
        let report = EvalReport {
            task: Task::RemainingTime,
            variant: "gat-single".into(),
            partition: "test".into(),
            include_end: true,
            num_samples: 2,
            num_end_samples: 1,
            num_unseen_targets: 0,
            loss: 0.5,
            classification: None,
            regression: Some(regression_metrics(&[1.0, 7.0], &[0.0, 0.0]).unwrap()),
        };
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
        assert!(report.table().contains("MAE: 4.00 h"));
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 1..60)) {
            let (p, l): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let r = regression_metrics(&p, &l).unwrap();
            prop_assert!(r.rmse_hours >= r.mae_hours && r.mae_hours >= 0.0);
        }

        #[test]
        fn weighted_f_is_within_class_range(
            pairs in prop::collection::vec((0usize..5, 0usize..5), 1..80),
        ) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let labels: Vec<Option<usize>> = labels.into_iter().map(Some).collect();
            let m = classification_metrics(&one_hot(&preds, 5), &labels, &[]).unwrap();
            let supported = m.per_class.iter().filter(|c| c.support > 0);
            let lo = supported.clone().map(|c| c.f1).fold(f64::INFINITY, f64::min);
            let hi = supported.map(|c| c.f1).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.weighted_f1 >= lo - 1e-12 && m.weighted_f1 <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&m.accuracy));
        }
    }
}
