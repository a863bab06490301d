//! Training runs, seed sweeps, cross-dataset evaluation and gate telemetry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activations::ActivationKind;
use crate::analysis::{self, DropoutSite, DropoutSpec, MaskSpec};
use crate::data::{epoch_seed, make_split, DatasetKind, EmbeddingDataset, SizeClass, SplitMix64};
use crate::error::{IqaError, Result};
use crate::head::{DropoutMasks, HeadConfig, HeadModel, DEFAULT_HIDDEN_DIM};
use crate::kernel::Real;
use crate::losses::{population_std, total_loss_with_margin, DEFAULT_LAMBDA_M};
use crate::metrics::{aggregate_seeds, MetricPair, SeedSummary};
use crate::optim::{AdamState, LrSchedule, DEFAULT_LR};
use crate::parallel::{self, Execution};

pub const DEFAULT_SEEDS: [u64; 3] = [8, 19, 25];
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_BATCH: usize = 12;
pub const GATE_HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleChoice {
    /// Constant for small datasets, multi-step for large ones, constant when
    /// the dataset name is not one of the known benchmarks.
    #[default]
    Auto,
    Constant,
    MultiStep,
}

/// How the ranking margin `lambda_m * sigma_y` obtains `sigma_y`, or whether
/// the ranking term is used at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginMode {
    /// Population std of the current batch's labels.
    #[default]
    Batch,
    /// Population std of all training labels.
    Dataset,
    /// MSE only.
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub act1: ActivationKind,
    pub act2: ActivationKind,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: Real,
    pub schedule: ScheduleChoice,
    pub lambda_m: Real,
    pub margin: MarginMode,
    pub mask: Option<MaskSpec>,
    pub dropout: Option<DropoutSpec>,
    pub telemetry: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dim: DEFAULT_HIDDEN_DIM,
            act1: ActivationKind::lrelu(),
            act2: ActivationKind::lrelu(),
            seeds: DEFAULT_SEEDS.to_vec(),
            epochs: DEFAULT_EPOCHS,
            batch: DEFAULT_BATCH,
            lr: DEFAULT_LR,
            schedule: ScheduleChoice::Auto,
            lambda_m: DEFAULT_LAMBDA_M,
            margin: MarginMode::Batch,
            mask: None,
            dropout: None,
            telemetry: true,
        }
    }
}

impl TrainConfig {
    pub fn gated() -> Self {
        Self {
            act1: ActivationKind::Gated,
            act2: ActivationKind::Gated,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IqaError::Config(m));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!(
                "learning rate must be finite and >= 0, got {}",
                self.lr
            ));
        }
        if !(self.lambda_m >= 0.0 && self.lambda_m.is_finite()) {
            return bad(format!(
                "lambda_m must be finite and >= 0, got {}",
                self.lambda_m
            ));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if let Some(m) = &self.mask {
            m.validate()?;
        }
        if let Some(d) = &self.dropout {
            d.validate()?;
        }
        self.act1.validate()?;
        self.act2.validate()
    }

    pub fn head_config(&self, input_dim: usize, seed: u64) -> HeadConfig {
        HeadConfig {
            input_dim,
            hidden_dim: self.hidden_dim,
            act1: self.act1,
            act2: self.act2,
            init_seed: seed,
        }
    }

    pub fn resolve_schedule(&self, dataset_name: &str) -> LrSchedule {
        match self.schedule {
            ScheduleChoice::Constant => LrSchedule::Constant,
            ScheduleChoice::MultiStep => LrSchedule::multistep_default(),
            ScheduleChoice::Auto => match dataset_name.parse::<DatasetKind>() {
                Ok(kind) if kind.size_class() == SizeClass::Large => {
                    LrSchedule::multistep_default()
                }
                _ => LrSchedule::Constant,
            },
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: Real,
    pub mse: Real,
    pub margin: Real,
    /// Exactly `mse + margin`.
    pub total: Real,
    pub val_srcc: Option<f64>,
    pub val_plcc: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub srcc: f64,
    /// PLCC at the best-SRCC epoch.
    pub plcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateHistogram {
    /// Completed training epochs when recorded; 0 is the initial state.
    pub after_epochs: usize,
    /// Activation site, 1 or 2.
    pub site: usize,
    /// Counts over 20 equal bins of `[0, 1]`.
    pub counts: Vec<usize>,
    pub min: Real,
    pub mean: Real,
    pub max: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub seed: u64,
    pub config_hash: String,
    pub n_train: usize,
    pub n_val: usize,
    pub schedule: LrSchedule,
    pub epochs: Vec<EpochRecord>,
    pub best: Option<BestEpoch>,
    /// Metrics of the best-epoch model on its own training split.
    pub best_train: Option<MetricPair>,
    pub gate_telemetry: Vec<GateHistogram>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// Model snapshot from the best-validation-SRCC epoch (the final model if
    /// no epoch had a defined SRCC).
    pub best_model: HeadModel,
}

/// Histogram of gate weights per gated site; empty for plain activations.
pub fn record_gate_telemetry(model: &HeadModel, after_epochs: usize) -> Vec<GateHistogram> {
    model
        .gate_weights()
        .into_iter()
        .enumerate()
        .filter_map(|(i, w)| w.map(|w| (i + 1, w)))
        .map(|(site, w)| {
            let mut counts = vec![0; GATE_HISTOGRAM_BINS];
            for &v in &w {
                let bin = ((v * GATE_HISTOGRAM_BINS as Real).floor() as usize)
                    .min(GATE_HISTOGRAM_BINS - 1);
                counts[bin] += 1;
            }
            GateHistogram {
                after_epochs,
                site,
                counts,
                min: w.iter().copied().fold(Real::INFINITY, Real::min),
                mean: w.iter().sum::<Real>() / w.len() as Real,
                max: w.iter().copied().fold(Real::NEG_INFINITY, Real::max),
            }
        })
        .collect()
}

fn metrics_or_none(pred: &[Real], labels: &[Real]) -> (Option<f64>, Option<f64>) {
    (
        crate::metrics::srcc(pred, labels).ok(),
        crate::metrics::plcc(pred, labels).ok(),
    )
}

fn dropout_masks(
    spec: Option<&DropoutSpec>,
    rows: usize,
    input_dim: usize,
    hidden_dim: usize,
    rng: &mut ChaCha8Rng,
) -> DropoutMasks {
    let Some(spec) = spec else {
        return DropoutMasks::default();
    };
    match spec.site {
        DropoutSite::Input => DropoutMasks {
            input: Some(analysis::dropout_mask(rows, input_dim, spec.keep, rng)),
            ..DropoutMasks::default()
        },
        DropoutSite::Hidden => DropoutMasks {
            input: None,
            hidden1: Some(analysis::dropout_mask(rows, hidden_dim, spec.keep, rng)),
            hidden2: Some(analysis::dropout_mask(rows, hidden_dim, spec.keep, rng)),
        },
    }
}

/// One deterministic training run for `seed`: split, train, validate every epoch.
pub fn train_one(
    config: &TrainConfig,
    dataset: &EmbeddingDataset,
    seed: u64,
) -> Result<RunOutcome> {
    config.validate()?;
    let labels_all = dataset.labels()?;
    if dataset.len() < 2 {
        return Err(IqaError::Config("need at least 2 samples to split".into()));
    }
    let features = match &config.mask {
        Some(spec) => analysis::mask_features(&dataset.features, spec),
        None => dataset.features.clone(),
    };
    let split = make_split(dataset.len(), seed);
    let x_train = features.select_rows(&split.train);
    let y_train: Vec<Real> = split.train.iter().map(|&i| labels_all[i]).collect();
    let x_val = features.select_rows(&split.val);
    let y_val: Vec<Real> = split.val.iter().map(|&i| labels_all[i]).collect();

    let head = config.head_config(dataset.dim(), seed);
    let mut model = HeadModel::build(head)?;
    let mut adam = AdamState::default();
    let schedule = config.resolve_schedule(dataset.name());
    let dataset_sigma = population_std(&y_train);

    let mut report = RunReport {
        dataset: dataset.name().to_string(),
        seed,
        config_hash: config.hash(),
        n_train: split.train.len(),
        n_val: split.val.len(),
        schedule: schedule.clone(),
        epochs: Vec::with_capacity(config.epochs),
        best: None,
        best_train: None,
        gate_telemetry: Vec::new(),
    };
    if config.telemetry {
        report
            .gate_telemetry
            .extend(record_gate_telemetry(&model, 0));
    }
    let mut best_model = None;

    for epoch in 0..config.epochs {
        let lr = schedule.lr_at(config.lr, epoch);
        let eseed = epoch_seed(seed, epoch);
        let mut order: Vec<usize> = (0..x_train.rows()).collect();
        SplitMix64::new(eseed).shuffle(&mut order);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(eseed);

        let (mut mse_sum, mut margin_sum, mut batches) = (0.0, 0.0, 0usize);
        for (b, idx) in order.chunks(config.batch).enumerate() {
            let xb = x_train.select_rows(idx);
            let yb: Vec<Real> = idx.iter().map(|&i| y_train[i]).collect();
            let masks = dropout_masks(
                config.dropout.as_ref(),
                idx.len(),
                dataset.dim(),
                config.hidden_dim,
                &mut dropout_rng,
            );
            let pred = model.forward_masked(&xb, masks)?;
            let margin = match config.margin {
                MarginMode::Batch => Some(config.lambda_m * population_std(&yb)),
                MarginMode::Dataset => Some(config.lambda_m * dataset_sigma),
                MarginMode::Off => None,
            };
            let loss = total_loss_with_margin(&yb, &pred, margin)?;
            if !loss.total.is_finite() {
                return Err(IqaError::Numerical {
                    epoch,
                    batch: b,
                    reason: format!("loss is {}", loss.total),
                });
            }
            model.zero_grad();
            model.backward_pass(&loss.grad)?;
            adam.step(model.params(), lr)
                .map_err(|e| IqaError::Numerical {
                    epoch,
                    batch: b,
                    reason: e.to_string(),
                })?;
            mse_sum += loss.mse;
            margin_sum += loss.margin;
            batches += 1;
        }
        let mse = mse_sum / batches as Real;
        let margin = margin_sum / batches as Real;

        let val_pred = model.predict(&x_val)?;
        if val_pred.iter().any(|p| !p.is_finite()) {
            return Err(IqaError::Numerical {
                epoch,
                batch: batches,
                reason: "non-finite validation prediction".into(),
            });
        }
        let (val_srcc, val_plcc) = metrics_or_none(&val_pred, &y_val);
        report.epochs.push(EpochRecord {
            epoch,
            lr,
            mse,
            margin,
            total: mse + margin,
            val_srcc,
            val_plcc,
        });
        if let Some(s) = val_srcc {
            if report.best.is_none_or(|b| s > b.srcc) {
                report.best = Some(BestEpoch {
                    epoch,
                    srcc: s,
                    plcc: val_plcc.unwrap_or(f64::NAN),
                });
                best_model = Some(model.clone());
            }
        }
        if config.telemetry {
            report
                .gate_telemetry
                .extend(record_gate_telemetry(&model, epoch + 1));
        }
    }

    let best_model = best_model.unwrap_or(model);
    report.best_train = MetricPair::compute(&best_model.predict(&x_train)?, &y_train).ok();
    Ok(RunOutcome { report, best_model })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub dataset: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub runs: Vec<RunReport>,
    pub failures: Vec<SeedFailure>,
    pub srcc: Option<SeedSummary>,
    pub plcc: Option<SeedSummary>,
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per seed plus `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,best_epoch,srcc,plcc\n");
        for r in &self.runs {
            match r.best {
                Some(b) => out.push_str(&format!("{},{},{},{}\n", r.seed, b.epoch, b.srcc, b.plcc)),
                None => out.push_str(&format!("{},,,\n", r.seed)),
            }
        }
        if let (Some(s), Some(p)) = (self.srcc, self.plcc) {
            out.push_str(&format!("mean,,{},{}\n", s.mean, p.mean));
            out.push_str(&format!("std,,{},{}\n", s.std, p.std));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    /// Best-epoch models for the successful seeds, in seed order.
    pub models: Vec<(u64, HeadModel)>,
}

/// Runs every configured seed (concurrently under [`Execution::Parallel`]) and
/// aggregates best-epoch metrics. Failing seeds are recorded, not fatal.
pub fn train_sweep(
    config: &TrainConfig,
    dataset: &EmbeddingDataset,
    exec: Execution,
) -> Result<SweepOutcome> {
    config.validate()?;
    let results = parallel::map(exec, config.seeds.clone(), |seed| {
        (seed, train_one(config, dataset, seed))
    });
    let mut runs = Vec::new();
    let mut models = Vec::new();
    let mut failures = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(out) => {
                runs.push(out.report);
                models.push((seed, out.best_model));
            }
            Err(e) => failures.push(SeedFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    let best: Vec<BestEpoch> = runs.iter().filter_map(|r| r.best).collect();
    let summarize = |f: fn(&BestEpoch) -> f64| {
        (!best.is_empty()).then(|| aggregate_seeds(&best.iter().map(f).collect::<Vec<_>>()))
    };
    let report = SweepReport {
        dataset: dataset.name().to_string(),
        config: config.clone(),
        config_hash: config.hash(),
        srcc: summarize(|b| b.srcc),
        plcc: summarize(|b| b.plcc),
        runs,
        failures,
    };
    Ok(SweepOutcome { report, models })
}

/// SRCC/PLCC of a frozen head over an entire (foreign) dataset.
pub fn cross_eval(model: &HeadModel, dataset: &EmbeddingDataset) -> Result<MetricPair> {
    if model.input_dim() != dataset.dim() {
        return Err(IqaError::shape(
            "cross_eval",
            model.input_dim(),
            dataset.dim(),
        ));
    }
    let pred = model.predict_with(&dataset.features, Execution::Parallel)?;
    MetricPair::compute(&pred, dataset.labels()?)
}
