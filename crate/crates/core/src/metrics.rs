//! Evaluation statistics: Spearman rank correlation, minority-class F1, MSE.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::selection::TransferLabel;

/// Predicted and actual values of equal length with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    predicted: Vec<f64>,
    actual: Vec<f64>,
}

impl PairedSeries {
    pub fn new(predicted: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::invalid(alloc::format!(
                "paired series lengths differ: {} vs {}",
                predicted.len(),
                actual.len()
            )));
        }
        if predicted.iter().chain(&actual).any(|x| !x.is_finite()) {
            return Err(Error::invalid("paired series contains a non-finite entry"));
        }
        Ok(Self { predicted, actual })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("one side of the series is constant"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Pearson correlation of the fractional ranks of both sides.
pub fn spearman(series: &PairedSeries) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::UndefinedCorrelation("rank correlation needs at least two points"));
    }
    pearson(&fractional_ranks(&series.predicted), &fractional_ranks(&series.actual))
}

/// F1 score of the less frequent class in `true_labels`.
///
/// Equal class counts resolve to [`TransferLabel::Positive`]. The score is `0`
/// when the minority class is never predicted or never present.
pub fn f1_minority(predicted: &[TransferLabel], truth: &[TransferLabel]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid("label lists must have equal, non-zero length"));
    }
    let positives = truth.iter().filter(|l| **l == TransferLabel::Positive).count();
    let minority = if positives <= truth.len() - positives {
        TransferLabel::Positive
    } else {
        TransferLabel::Negative
    };
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, t) in predicted.iter().zip(truth) {
        match (*p == minority, *t == minority) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fneg) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

pub fn mse(series: &PairedSeries) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    let mut s = CompensatedSum::default();
    for (p, a) in series.predicted.iter().zip(&series.actual) {
        s.add((p - a) * (p - a));
    }
    s.value() / series.len() as f64
}
