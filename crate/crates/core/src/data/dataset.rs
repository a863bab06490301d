use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{IqaError, Result};
use crate::kernel::{Matrix, Real};

/// Free-form provenance stored in the container's JSON trailer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub features: Matrix,
    /// Normalized MOS in `[0, 1]`; absent for unlabeled extractor output.
    pub labels: Option<Vec<Real>>,
    pub ids: Vec<String>,
    pub provenance: Provenance,
}

impl EmbeddingDataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Option<Vec<Real>>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let ids = ids.unwrap_or_else(|| (0..features.rows()).map(|i| i.to_string()).collect());
        let ds = Self {
            features,
            labels,
            ids,
            provenance: Provenance {
                name: name.into(),
                ..Provenance::default()
            },
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn name(&self) -> &str {
        &self.provenance.name
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Result<&[Real]> {
        self.labels
            .as_deref()
            .ok_or_else(|| IqaError::Config(format!("dataset `{}` has no labels", self.name())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(IqaError::Config(reason));
        if self.is_empty() || self.dim() == 0 {
            return bad(format!("empty dataset ({} x {})", self.len(), self.dim()));
        }
        if !self.features.is_finite() {
            return bad("features contain NaN or Inf".into());
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.len() {
                return bad(format!(
                    "{} labels for {} samples",
                    labels.len(),
                    self.len()
                ));
            }
            if let Some(l) = labels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return bad(format!("label {l} outside [0, 1]"));
            }
        }
        if self.ids.len() != self.len() {
            return bad(format!("{} ids for {} samples", self.ids.len(), self.len()));
        }
        let mut seen = HashSet::with_capacity(self.ids.len());
        if let Some(dup) = self.ids.iter().find(|id| !seen.insert(id.as_str())) {
            return bad(format!("duplicate sample id `{dup}`"));
        }
        Ok(())
    }

    /// Subset in the given index order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        if features.shape() != self.features.shape() {
            return Err(IqaError::shape(
                "with_features",
                format!("{:?}", self.features.shape()),
                format!("{:?}", features.shape()),
            ));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }
}
