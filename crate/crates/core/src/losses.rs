//! Point-wise MSE, pairwise hinge ranking loss with a dynamic margin, and
//! their sum. Every loss returns its gradient with respect to the predictions.

use crate::error::{IqaError, Result};
use crate::kernel::Real;

/// Margin coefficient: `m = lambda_m * std(ground truth)`.
pub const DEFAULT_LAMBDA_M: Real = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub loss: Real,
    pub grad: Vec<Real>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeLoss {
    pub mse: Real,
    pub margin: Real,
    pub total: Real,
    pub grad: Vec<Real>,
}

fn check_lengths(op: &'static str, target: &[Real], pred: &[Real]) -> Result<()> {
    if target.len() != pred.len() {
        return Err(IqaError::shape(op, target.len(), pred.len()));
    }
    if target.is_empty() {
        return Err(IqaError::shape(op, "non-empty batch", 0));
    }
    Ok(())
}

/// Population (divide-by-n) standard deviation.
pub fn population_std(values: &[Real]) -> Real {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as Real;
    let mean = values.iter().sum::<Real>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n;
    var.sqrt()
}

pub fn mse_loss(target: &[Real], pred: &[Real]) -> Result<LossValue> {
    check_lengths("mse_loss", target, pred)?;
    let n = target.len() as Real;
    let mut loss = 0.0;
    let grad = target
        .iter()
        .zip(pred)
        .map(|(&s, &p)| {
            let r = p - s;
            loss += r * r;
            2.0 * r / n
        })
        .collect();
    Ok(LossValue {
        loss: loss / n,
        grad,
    })
}

/// Pairwise hinge loss with margin `lambda_m * population_std(target)`.
pub fn margin_loss(target: &[Real], pred: &[Real], lambda_m: Real) -> Result<LossValue> {
    check_lengths("margin_loss", target, pred)?;
    margin_loss_with_margin(target, pred, lambda_m * population_std(target))
}

/// Pairwise hinge loss with an explicit margin:
/// `2/(n(n-1)) * sum_{i<j} max(0, -sgn(s_i - s_j)(p_i - p_j) + m)`.
///
/// Tied targets contribute `max(0, m)` with zero gradient; the subgradient at
/// the hinge kink is 0.
pub fn margin_loss_with_margin(target: &[Real], pred: &[Real], margin: Real) -> Result<LossValue> {
    check_lengths("margin_loss", target, pred)?;
    let n = target.len();
    let mut grad = vec![0.0; n];
    if n < 2 {
        return Ok(LossValue { loss: 0.0, grad });
    }
    let scale = 2.0 / (n as Real * (n as Real - 1.0));
    let mut loss = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let sign = sgn(target[i] - target[j]);
            let term = -sign * (pred[i] - pred[j]) + margin;
            if term > 0.0 {
                loss += term;
                grad[i] -= sign * scale;
                grad[j] += sign * scale;
            }
        }
    }
    Ok(LossValue {
        loss: loss * scale,
        grad,
    })
}

#[inline]
fn sgn(v: Real) -> Real {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `MSE + margin`, with the margin term optionally switched off.
pub fn total_loss_with_margin(
    target: &[Real],
    pred: &[Real],
    margin: Option<Real>,
) -> Result<CompositeLoss> {
    let mse = mse_loss(target, pred)?;
    let rank = match margin {
        Some(m) => margin_loss_with_margin(target, pred, m)?,
        None => LossValue {
            loss: 0.0,
            grad: vec![0.0; target.len()],
        },
    };
    let grad = mse
        .grad
        .iter()
        .zip(&rank.grad)
        .map(|(a, b)| a + b)
        .collect();
    Ok(CompositeLoss {
        mse: mse.loss,
        margin: rank.loss,
        total: mse.loss + rank.loss,
        grad,
    })
}

pub fn total_loss(target: &[Real], pred: &[Real], lambda_m: Real) -> Result<CompositeLoss> {
    check_lengths("total_loss", target, pred)?;
    total_loss_with_margin(target, pred, Some(lambda_m * population_std(target)))
}
