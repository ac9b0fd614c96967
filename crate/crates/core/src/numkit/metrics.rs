use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a metric had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

/// Accuracy, precision, recall and F1 with `+1` as the positive class.
pub fn classification_metrics(predicted: &[f64], actual: &[f64]) -> Result<ClassificationMetrics> {
    if predicted.len() != actual.len() {
        return invalid(format!("{} predictions for {} labels", predicted.len(), actual.len()));
    }
    if predicted.is_empty() {
        return invalid("metrics of an empty prediction set");
    }
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &a) in predicted.iter().zip(actual) {
        let (pp, ap) = (p > 0.0, a > 0.0);
        if pp == ap {
            correct += 1;
        }
        match (pp, ap) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fneg);
    let (f1, f1_undefined) = if precision + recall == 0.0 {
        (0.0, true)
    } else {
        (2.0 * precision * recall / (precision + recall), false)
    };
    Ok(ClassificationMetrics {
        accuracy: correct as f64 / predicted.len() as f64,
        precision,
        recall,
        f1,
        precision_undefined,
        recall_undefined,
        f1_undefined,
    })
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() || predicted.is_empty() {
        return invalid(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            predicted.len(),
            actual.len()
        ));
    }
    let mse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}
