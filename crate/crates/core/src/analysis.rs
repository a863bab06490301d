//! Ablations on fixed embeddings: magnitude-percentile feature masking,
//! input/hidden dropout baselines and activation-combination grids.
//!
//! Every sweep is a set of independent (cell, seed) training runs; they are
//! fanned out through [`parallel::map`] and then aggregated per cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::EmbeddingDataset;
use crate::error::{IqaError, Result};
use crate::kernel::{Matrix, Real};
use crate::metrics::{aggregate_seeds, SeedSummary};
use crate::parallel::{self, Execution};
use crate::trainer::{train_one, TrainConfig};

/// Retained-percentile grid used for the masking and dropout tables.
pub const DEFAULT_K_GRID: [f64; 6] = [100.0, 90.0, 70.0, 50.0, 30.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskScope {
    /// Each embedding is ranked by its own magnitudes.
    #[default]
    PerSample,
    /// One ranking over every entry of the feature matrix.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Keep the largest-magnitude entries.
    #[default]
    RetainTop,
    /// Keep the smallest-magnitude entries.
    RetainBottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Retained percentile in `(0, 100]`.
    pub k: f64,
    #[serde(default)]
    pub scope: MaskScope,
    #[serde(default)]
    pub mode: MaskMode,
}

impl MaskSpec {
    pub fn top(k: f64) -> Self {
        Self {
            k,
            scope: MaskScope::PerSample,
            mode: MaskMode::RetainTop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k <= 100.0) {
            return Err(IqaError::Config(format!(
                "retained percentile must lie in (0, 100], got {}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Number of entries kept out of `len` at retained percentile `k`.
pub fn retained_count(len: usize, k: f64) -> usize {
    // k*len/100 computed in f64; round away representation noise before ceil
    let exact = k * len as f64 / 100.0;
    let nearest = exact.round();
    let c = if (exact - nearest).abs() < 1e-9 {
        nearest
    } else {
        exact.ceil()
    };
    (c as usize).min(len)
}

/// Indices of `values` sorted for retention: by magnitude (descending for
/// `RetainTop`, ascending for `RetainBottom`), ties by lower index first.
fn retention_order(values: &[Real], mode: MaskMode) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (values[a].abs(), values[b].abs());
        let by_mag = match mode {
            MaskMode::RetainTop => mb.total_cmp(&ma),
            MaskMode::RetainBottom => ma.total_cmp(&mb),
        };
        by_mag.then(a.cmp(&b))
    });
    order
}

fn mask_slice(values: &[Real], k: f64, mode: MaskMode) -> Vec<Real> {
    let keep = retained_count(values.len(), k);
    if keep == values.len() {
        return values.to_vec();
    }
    let mut out = vec![0.0; values.len()];
    for &i in retention_order(values, mode).iter().take(keep) {
        out[i] = values[i];
    }
    out
}

/// Keeps the `ceil(k*d/100)` largest-magnitude entries of `x` and zeroes the rest.
pub fn mask_topk(x: &[Real], k: f64) -> Vec<Real> {
    mask_slice(x, k, MaskMode::RetainTop)
}

pub fn mask_features(features: &Matrix, spec: &MaskSpec) -> Matrix {
    match spec.scope {
        MaskScope::PerSample => {
            let mut out = Matrix::zeros(features.rows(), features.cols());
            for r in 0..features.rows() {
                out.row_mut(r)
                    .copy_from_slice(&mask_slice(features.row(r), spec.k, spec.mode));
            }
            out
        }
        MaskScope::Global => {
            let data = mask_slice(features.data(), spec.k, spec.mode);
            Matrix::from_vec(features.rows(), features.cols(), data).expect("same shape")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutSite {
    /// On the input embedding.
    Input,
    /// After each hidden activation.
    Hidden,
}

impl DropoutSite {
    pub fn method(self) -> &'static str {
        match self {
            DropoutSite::Input => "Input Dropout",
            DropoutSite::Hidden => "Dropout Layers",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    /// Keep probability in `(0, 1]`; the drop rate is `1 - keep`.
    pub keep: Real,
    pub site: DropoutSite,
}

impl DropoutSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return Err(IqaError::Config(format!(
                "dropout keep probability must lie in (0, 1], got {}",
                self.keep
            )));
        }
        Ok(())
    }
}

/// Inverted-dropout mask: each entry is `1/keep` with probability `keep`, else 0.
pub fn dropout_mask<R: Rng>(rows: usize, cols: usize, keep: Real, rng: &mut R) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    if keep >= 1.0 {
        m.fill(1.0);
        return m;
    }
    let scale = 1.0 / keep;
    for v in m.data_mut() {
        if rng.gen::<f64>() < keep as f64 {
            *v = scale;
        }
    }
    m
}

/// Applies inverted dropout when `training`; evaluation returns `x` untouched.
pub fn apply_dropout<R: Rng>(x: &Matrix, keep: Real, rng: &mut R, training: bool) -> Matrix {
    if !training || keep >= 1.0 {
        return x.clone();
    }
    let mask = dropout_mask(x.rows(), x.cols(), keep, rng);
    let data = x
        .data()
        .iter()
        .zip(mask.data())
        .map(|(a, m)| a * m)
        .collect();
    Matrix::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

/// Mean/std of best-epoch metrics over the seeds of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub srcc: SeedSummary,
    pub plcc: SeedSummary,
}

/// Trains every (cell, seed) pair and aggregates per cell, in cell order.
pub fn run_cells(
    cells: &[TrainConfig],
    dataset: &EmbeddingDataset,
    exec: Execution,
) -> Result<Vec<CellSummary>> {
    for c in cells {
        c.validate()?;
    }
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results = parallel::map(exec, jobs, |(i, seed)| {
        train_one(&cells[i], dataset, seed).map(|o| (i, o.report.best))
    });
    let mut srcc = vec![Vec::new(); cells.len()];
    let mut plcc = vec![Vec::new(); cells.len()];
    for r in results {
        let (i, best) = r?;
        let best = best.ok_or_else(|| {
            IqaError::UndefinedMetric("a sweep run never produced a defined validation SRCC".into())
        })?;
        srcc[i].push(best.srcc);
        plcc[i].push(best.plcc);
    }
    Ok(srcc
        .iter()
        .zip(&plcc)
        .map(|(s, p)| CellSummary {
            srcc: aggregate_seeds(s),
            plcc: aggregate_seeds(p),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRow {
    pub k: f64,
    pub srcc: f64,
    pub srcc_std: f64,
    pub plcc: f64,
    pub plcc_std: f64,
    pub delta_srcc: f64,
    pub delta_plcc: f64,
}

/// One row per retained percentile, with deltas against `k = 100` (which is
/// always trained as the reference even when absent from `k_list`).
pub fn run_masking_sweep(
    config: &TrainConfig,
    dataset: &EmbeddingDataset,
    k_list: &[f64],
    template: MaskSpec,
    exec: Execution,
) -> Result<Vec<MaskRow>> {
    let mut ks: Vec<f64> = k_list.to_vec();
    let has_ref = ks.contains(&100.0);
    if !has_ref {
        ks.insert(0, 100.0);
    }
    let cells: Vec<TrainConfig> = ks
        .iter()
        .map(|&k| TrainConfig {
            mask: Some(MaskSpec { k, ..template }),
            ..config.clone()
        })
        .collect();
    let summary = run_cells(&cells, dataset, exec)?;
    let reference = summary[ks.iter().position(|&k| k == 100.0).unwrap()];
    Ok(ks
        .iter()
        .zip(&summary)
        .filter(|(&k, _)| has_ref || k != 100.0)
        .map(|(&k, s)| MaskRow {
            k,
            srcc: s.srcc.mean,
            srcc_std: s.srcc.std,
            plcc: s.plcc.mean,
            plcc_std: s.plcc.std,
            delta_srcc: s.srcc.mean - reference.srcc.mean,
            delta_plcc: s.plcc.mean - reference.plcc.mean,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropoutRow {
    pub method: String,
    /// Keep percentage; the drop rate is `1 - k/100`.
    pub k: f64,
    pub srcc: f64,
    pub srcc_std: f64,
    pub plcc: f64,
    pub plcc_std: f64,
    pub delta_srcc: f64,
    pub delta_plcc: f64,
}

/// Dropout baselines: for each site, one row per keep percentage with deltas
/// against `k = 100` (no dropout).
pub fn run_dropout_sweep(
    config: &TrainConfig,
    dataset: &EmbeddingDataset,
    k_list: &[f64],
    sites: &[DropoutSite],
    exec: Execution,
) -> Result<Vec<DropoutRow>> {
    let mut ks: Vec<f64> = k_list.to_vec();
    if !ks.contains(&100.0) {
        ks.insert(0, 100.0);
    }
    let mut cells = Vec::new();
    let mut labels = Vec::new();
    for &site in sites {
        for &k in &ks {
            cells.push(TrainConfig {
                dropout: (k < 100.0).then_some(DropoutSpec {
                    keep: (k / 100.0) as Real,
                    site,
                }),
                ..config.clone()
            });
            labels.push((site, k));
        }
    }
    let summary = run_cells(&cells, dataset, exec)?;
    let mut rows = Vec::new();
    for (site_idx, &site) in sites.iter().enumerate() {
        let block = &summary[site_idx * ks.len()..(site_idx + 1) * ks.len()];
        let reference = block[ks.iter().position(|&k| k == 100.0).unwrap()];
        for (&k, s) in ks.iter().zip(block) {
            if !k_list.contains(&k) {
                continue;
            }
            rows.push(DropoutRow {
                method: site.method().to_string(),
                k,
                srcc: s.srcc.mean,
                srcc_std: s.srcc.std,
                plcc: s.plcc.mean,
                plcc_std: s.plcc.std,
                delta_srcc: s.srcc.mean - reference.srcc.mean,
                delta_plcc: s.plcc.mean - reference.plcc.mean,
            });
        }
    }
    debug_assert_eq!(labels.len(), cells.len());
    Ok(rows)
}

/// The seven `Act1 + Act2` combinations of the activation ablation table.
pub fn activation_grid_combos() -> Vec<(ActivationKind, ActivationKind)> {
    use ActivationKind::*;
    let lrelu = ActivationKind::lrelu();
    vec![
        (Gelu, Gelu),
        (Gelu, lrelu),
        (lrelu, lrelu),
        (Sigmoid, lrelu),
        (Sigmoid, Gelu),
        (Tanh, Tanh),
        (Tanh, lrelu),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationRow {
    pub act1: String,
    pub act2: String,
    pub srcc: f64,
    pub srcc_std: f64,
    pub plcc: f64,
    pub plcc_std: f64,
}

pub fn run_activation_grid(
    config: &TrainConfig,
    dataset: &EmbeddingDataset,
    combos: &[(ActivationKind, ActivationKind)],
    exec: Execution,
) -> Result<Vec<ActivationRow>> {
    let cells: Vec<TrainConfig> = combos
        .iter()
        .map(|&(act1, act2)| TrainConfig {
            act1,
            act2,
            ..config.clone()
        })
        .collect();
    let summary = run_cells(&cells, dataset, exec)?;
    Ok(combos
        .iter()
        .zip(summary)
        .map(|(&(a1, a2), s)| ActivationRow {
            act1: a1.label().to_string(),
            act2: a2.label().to_string(),
            srcc: s.srcc.mean,
            srcc_std: s.srcc.std,
            plcc: s.plcc.mean,
            plcc_std: s.plcc.std,
        })
        .collect())
}

/// Serializes table rows as CSV with a header derived from the row fields.
pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| IqaError::Config(format!("csv encoding: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| IqaError::Config(format!("csv encoding: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
