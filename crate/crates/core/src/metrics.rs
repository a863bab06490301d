//! Rank and linear correlation between predictions and labels, and
//! aggregation of per-seed results.

use serde::{Deserialize, Serialize};

use crate::error::{IqaError, Result};
use crate::kernel::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub srcc: f64,
    pub plcc: f64,
}

impl MetricPair {
    pub fn compute(pred: &[Real], label: &[Real]) -> Result<Self> {
        Ok(Self {
            srcc: srcc(pred, label)?,
            plcc: plcc(pred, label)?,
        })
    }
}

fn check(pred: &[Real], label: &[Real]) -> Result<()> {
    if pred.len() != label.len() {
        return Err(IqaError::shape("correlation", pred.len(), label.len()));
    }
    if pred.len() < 2 {
        return Err(IqaError::UndefinedMetric(format!(
            "correlation needs at least 2 samples, got {}",
            pred.len()
        )));
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(IqaError::UndefinedMetric(
            "one of the inputs has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[Real]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson linear correlation with population moments.
pub fn plcc(pred: &[Real], label: &[Real]) -> Result<f64> {
    check(pred, label)?;
    let x: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = label.iter().map(|&v| v as f64).collect();
    pearson(&x, &y)
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(pred: &[Real], label: &[Real]) -> Result<f64> {
    check(pred, label)?;
    if pred.iter().chain(label).any(|v| !v.is_finite()) {
        return Err(IqaError::UndefinedMetric("non-finite input".into()));
    }
    pearson(&average_ranks(pred), &average_ranks(label))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    /// Sample standard deviation (divide by n - 1); 0 for a single seed.
    pub std: f64,
}

pub fn aggregate_seeds(values: &[f64]) -> SeedSummary {
    let n = values.len();
    if n == 0 {
        return SeedSummary {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    SeedSummary { mean, std }
}
