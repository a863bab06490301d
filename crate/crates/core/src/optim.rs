//! Adam over the head's parameter registry, and the learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{IqaError, Result};
use crate::head::ParamSlot;
use crate::kernel::Real;

pub const DEFAULT_LR: Real = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    pub step: u64,
    first: Vec<Vec<Real>>,
    second: Vec<Vec<Real>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: Real, beta2: Real, eps: Real) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<Real>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<Real>] {
        &self.second
    }

    /// One bias-corrected Adam update. Moments are allocated lazily on the
    /// first call and must stay aligned with the registry afterwards.
    pub fn step(&mut self, params: Vec<ParamSlot<'_>>, lr: Real) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(&params)
                .any(|(m, p)| m.len() != p.value.len())
        {
            return Err(IqaError::shape(
                "adam_step",
                "moment shapes matching the parameter registry",
                "a different registry",
            ));
        }
        if let Some(bad) = params
            .iter()
            .find(|p| p.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(IqaError::NonFiniteGradient(bad.name));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for ((slot, m), v) in params
            .into_iter()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for (((theta, &g), mi), vi) in slot
                .value
                .iter_mut()
                .zip(slot.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` at the start of each milestone epoch
    /// (epochs counted from 0).
    MultiStep {
        milestones: Vec<usize>,
        factor: Real,
    },
}

impl LrSchedule {
    pub fn multistep_default() -> Self {
        LrSchedule::MultiStep {
            milestones: vec![15, 25],
            factor: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let LrSchedule::MultiStep { milestones, factor } = self {
            if !milestones.windows(2).all(|w| w[0] < w[1]) {
                return Err(IqaError::Config(
                    "milestones must be strictly increasing".into(),
                ));
            }
            if !(*factor > 0.0 && *factor < 1.0) {
                return Err(IqaError::Config(format!(
                    "decay factor must lie in (0, 1), got {factor}"
                )));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, base: Real, epoch: usize) -> Real {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::MultiStep { milestones, factor } => {
                let passed = milestones.iter().filter(|&&m| m <= epoch).count();
                base * factor.powi(passed as i32)
            }
        }
    }
}
