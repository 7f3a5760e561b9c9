use serde::{Deserialize, Serialize};

use crate::neural::MAX_TTC;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    /// Mean absolute error, seconds.
    pub mae: f64,
    /// Population standard deviation of the absolute errors, seconds.
    pub std_abs_err: f64,
    pub n: usize,
}

fn check_pairs(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(Error::Shape("no predictions to score".into()));
    }
    Ok(())
}

pub fn regression_metrics(preds: &[f64], truths: &[f64]) -> Result<RegressionMetrics> {
    check_pairs(preds, truths)?;
    let n = preds.len() as f64;
    let errors: Vec<f64> = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).collect();
    let mae = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n;
    Ok(RegressionMetrics { mae, std_abs_err: var.sqrt(), n: preds.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBin {
    /// Row label such as `"2-3"`.
    pub label: String,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub bins: Vec<IntervalBin>,
    pub n: usize,
}

impl IntervalReport {
    /// True when per-bin MAE never decreases from one non-empty bin to the
    /// next.
    pub fn monotone_difficulty(&self) -> bool {
        let maes: Vec<f64> = self.bins.iter().filter_map(|b| b.mae).collect();
        maes.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Errors grouped by ground truth into `[k, k+1)` bins over `[0, 6]`; a
/// truth of exactly 6 joins the last bin.
pub fn interval_report(preds: &[f64], truths: &[f64]) -> Result<IntervalReport> {
    if preds.len() != truths.len() {
        return Err(Error::Shape(format!("{} predictions for {} truths", preds.len(), truths.len())));
    }
    let n_bins = MAX_TTC as usize;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (p, &t) in preds.iter().zip(truths) {
        if !(0.0..=MAX_TTC).contains(&t) {
            return Err(Error::Config(format!("truth {t} outside [0, {MAX_TTC}]")));
        }
        let k = (t.floor() as usize).min(n_bins - 1);
        sums[k] += (p - t).abs();
        counts[k] += 1;
    }
    let bins = (0..n_bins)
        .map(|k| IntervalBin {
            label: format!("{k}-{}", k + 1),
            lower: k as f64,
            upper: (k + 1) as f64,
            count: counts[k],
            mae: (counts[k] > 0).then(|| sums[k] / counts[k] as f64),
        })
        .collect();
    Ok(IntervalReport { bins, n: preds.len() })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(preds: &[bool], truths: &[bool]) -> Result<Self> {
        if preds.len() != truths.len() {
            return Err(Error::Shape(format!("{} predictions for {} truths", preds.len(), truths.len())));
        }
        let mut cm = Self::default();
        for (&p, &t) in preds.iter().zip(truths) {
            match (p, t) {
                (true, true) => cm.tp += 1,
                (false, true) => cm.fn_ += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

/// Scores left `None` where their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn classification_metrics(cm: &ConfusionMatrix) -> ClassificationScores {
    let ratio = |a: u64, b: u64| (b > 0).then(|| a as f64 / b as f64);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    ClassificationScores { precision, recall, f1 }
}
