//! Command-line front end: `ingest`, `synth`, `train`, `sweep`, `cross-eval`
//! and `inspect`.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data or format
//! error, 3 numerical abort.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::activations::ActivationKind;
use crate::analysis::{
    activation_grid_combos, rows_to_csv, run_activation_grid, run_dropout_sweep, run_masking_sweep,
    DropoutSite, DropoutSpec, MaskMode, MaskScope, MaskSpec, DEFAULT_K_GRID,
};
use crate::data::{
    read_checkpoint, read_container, read_raw, write_checkpoint, write_container, DatasetKind,
    SectionKind, SignalLayout, SynthSpec,
};
use crate::error::{IqaError, Result};
use crate::kernel::Real;
use crate::parallel::{self, Execution};
use crate::trainer::{
    cross_eval, hex_digest, train_sweep, MarginMode, ScheduleChoice, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "iqahead",
    version,
    about = "Train and evaluate IQA regression heads on embeddings"
)]
pub struct Cli {
    /// Emit machine-readable JSON on stdout and JSON diagnostics on stderr.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attach normalized MOS labels from a CSV (id,raw_score) to a feature container.
    Ingest(IngestArgs),
    /// Generate a seeded synthetic embedding dataset.
    Synth(SynthArgs),
    /// Train one head per seed and report best-epoch metrics.
    Train(TrainArgs),
    /// Run an ablation sweep.
    Sweep(SweepArgs),
    /// Evaluate a trained checkpoint on another dataset.
    CrossEval(CrossEvalArgs),
    /// Summarize a container, checkpoint or report.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub mos_csv: PathBuf,
    #[arg(long)]
    pub dataset_name: String,
    #[arg(long)]
    pub backbone: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayoutArg {
    Dense,
    TopDecile,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 8)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, value_enum, default_value = "dense")]
    pub layout: LayoutArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScheduleArg {
    Auto,
    Constant,
    Multistep,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MarginArg {
    Batch,
    Dataset,
    Off,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScopeArg {
    PerSample,
    Global,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    RetainTop,
    RetainBottom,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SiteArg {
    Input,
    Hidden,
}

impl From<SiteArg> for DropoutSite {
    fn from(s: SiteArg) -> Self {
        match s {
            SiteArg::Input => DropoutSite::Input,
            SiteArg::Hidden => DropoutSite::Hidden,
        }
    }
}

/// Training options shared by `train` and `sweep`. Unset flags fall back to
/// the config file, then to built-in defaults.
#[derive(Debug, Args, Default)]
pub struct TrainOpts {
    /// Embedding container with labels.
    #[arg(long)]
    pub data: PathBuf,
    /// JSON file with TrainConfig fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub act1: Option<ActivationKind>,
    #[arg(long)]
    pub act2: Option<ActivationKind>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<Real>,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
    #[arg(long = "lambda-m")]
    pub lambda_m: Option<Real>,
    #[arg(long, value_enum)]
    pub margin: Option<MarginArg>,
    /// Retained feature percentile applied at train and eval time.
    #[arg(long = "mask-k")]
    pub mask_k: Option<f64>,
    #[arg(long = "mask-scope", value_enum)]
    pub mask_scope: Option<ScopeArg>,
    #[arg(long = "mask-mode", value_enum)]
    pub mask_mode: Option<ModeArg>,
    /// Dropout keep probability in (0, 1].
    #[arg(long = "dropout-keep")]
    pub dropout_keep: Option<Real>,
    #[arg(long = "dropout-site", value_enum)]
    pub dropout_site: Option<SiteArg>,
    #[arg(long = "no-telemetry")]
    pub no_telemetry: bool,
    /// Worker threads for independent runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Run seeds and sweep cells one after another.
    #[arg(long)]
    pub sequential: bool,
    /// Output directory for reports, checkpoints and the manifest.
    #[arg(long = "out-dir", default_value = "iqahead-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SweepKind {
    Seeds,
    Mask,
    Dropout,
    Acts,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub kind: SweepKind,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Retained percentiles (mask) or keep percentages (dropout).
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<f64>>,
    /// Dropout sites for `sweep dropout`.
    #[arg(long, value_delimiter = ',', value_enum)]
    pub sites: Option<Vec<SiteArg>>,
    /// Activation pairs for `sweep acts`, e.g. `sigmoid+lrelu,gated+gated`;
    /// defaults to the seven-combination table.
    #[arg(long, value_delimiter = ',')]
    pub combos: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct CrossEvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
    /// Print gate-weight histograms from a report.
    #[arg(long)]
    pub gates: bool,
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let json_errors = argv.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            if json_errors && code != 0 {
                eprintln!("{}", json!({"error": e.to_string(), "code": code}));
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    let json_mode = cli.json;
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            if json_mode {
                eprintln!("{}", json!({"error": e.to_string(), "code": code}));
            } else {
                eprintln!("error: {e}");
            }
            code
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let json_mode = cli.json;
    match cli.command {
        Command::Ingest(a) => ingest(a, json_mode),
        Command::Synth(a) => synth(a, json_mode),
        Command::Train(a) => train(a.opts, json_mode),
        Command::Sweep(a) => sweep(a, json_mode),
        Command::CrossEval(a) => cross_eval_cmd(a, json_mode),
        Command::Inspect(a) => inspect(a, json_mode),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| IqaError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| IqaError::io(path, e))
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Writes `<dir>/manifest.json` (or `<file>.manifest.json`) for one command.
fn write_manifest(path: &Path, command: &str, body: serde_json::Value) -> Result<()> {
    let hash = hex_digest(body.to_string().as_bytes());
    let manifest = json!({
        "tool": "iqahead",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_hash": hash,
        "resolved": body,
    });
    write_text(path, &to_pretty(&manifest))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn emit(json_mode: bool, value: serde_json::Value, human: impl FnOnce() -> String) {
    use std::io::Write;
    let text = if json_mode {
        value.to_string()
    } else {
        human()
    };
    // a closed pipe (e.g. `| head`) is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn ingest(a: IngestArgs, json_mode: bool) -> Result<()> {
    let kind: DatasetKind = a
        .dataset_name
        .parse()
        .map_err(|e: IqaError| IqaError::Config(e.to_string()))?;
    let mut ds = read_container(&a.features)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&a.mos_csv)
        .map_err(|e| IqaError::format(&a.mos_csv, e.to_string()))?;
    let mut scores = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IqaError::format(&a.mos_csv, e.to_string()))?;
        let (id, raw) = match (rec.get(0), rec.get(1)) {
            (Some(id), Some(raw)) => (id.trim().to_string(), raw.trim()),
            _ => {
                return Err(IqaError::format(
                    &a.mos_csv,
                    "expected rows of id,raw_score",
                ))
            }
        };
        let raw: f64 = raw
            .parse()
            .map_err(|_| IqaError::format(&a.mos_csv, format!("bad score `{raw}` for `{id}`")))?;
        scores.insert(id, raw);
    }
    let labels = ds
        .ids
        .iter()
        .map(|id| {
            let raw = scores
                .get(id)
                .ok_or_else(|| IqaError::format(&a.mos_csv, format!("no score for id `{id}`")))?;
            Ok(kind.normalize(*raw)? as Real)
        })
        .collect::<Result<Vec<_>>>()?;
    ds.labels = Some(labels);
    ds.provenance.name = kind.name().to_string();
    ds.provenance.normalization = Some(kind.formula().to_string());
    if let Some(b) = a.backbone {
        ds.provenance.backbone = Some(b);
    }
    write_container(&ds, &a.out)?;
    write_manifest(
        &sidecar(&a.out),
        "ingest",
        json!({
            "features": a.features, "mos_csv": a.mos_csv, "dataset": kind.name(),
            "normalization": kind.formula(), "out": a.out, "n": ds.len(), "d": ds.dim(),
        }),
    )?;
    emit(
        json_mode,
        json!({"out": a.out, "n": ds.len(), "d": ds.dim(), "dataset": kind.name()}),
        || {
            format!(
                "wrote {} ({} samples, d={}, {})",
                a.out.display(),
                ds.len(),
                ds.dim(),
                kind.formula()
            )
        },
    );
    Ok(())
}

fn synth(a: SynthArgs, json_mode: bool) -> Result<()> {
    let spec = SynthSpec {
        n: a.n,
        d: a.d,
        seed: a.seed,
        noise: a.noise,
        layout: match a.layout {
            LayoutArg::Dense => SignalLayout::Dense,
            LayoutArg::TopDecile => SignalLayout::TopDecile,
        },
    };
    let ds = crate::data::gen_synthetic_with(&spec).map_err(|e| IqaError::Config(e.to_string()))?;
    write_container(&ds, &a.out)?;
    write_manifest(
        &sidecar(&a.out),
        "synth",
        json!({"spec": spec, "out": a.out}),
    )?;
    emit(json_mode, json!({"out": a.out, "n": a.n, "d": a.d}), || {
        format!("wrote {} ({} x {})", a.out.display(), a.n, a.d)
    });
    Ok(())
}

/// Defaults < config file < flags. Without a config file both activation
/// sites default to the gated activation.
pub fn resolve_config(opts: &TrainOpts) -> Result<TrainConfig> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| IqaError::io(path, e))?;
            let bad = |e: serde_json::Error| IqaError::Config(format!("{}: {e}", path.display()));
            let file: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
            let serde_json::Value::Object(fields) = file else {
                return Err(IqaError::Config(format!(
                    "{}: expected a JSON object",
                    path.display()
                )));
            };
            let mut merged = serde_json::to_value(TrainConfig::gated()).expect("serializable");
            for (k, v) in fields {
                merged[k] = v;
            }
            serde_json::from_value::<TrainConfig>(merged).map_err(bad)?
        }
        None => TrainConfig::gated(),
    };
    if let Some(v) = opts.act1 {
        cfg.act1 = v;
    }
    if let Some(v) = opts.act2 {
        cfg.act2 = v;
    }
    if let Some(v) = opts.hidden {
        cfg.hidden_dim = v;
    }
    if let Some(v) = &opts.seeds {
        cfg.seeds = v.clone();
    }
    if let Some(v) = opts.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = opts.batch {
        cfg.batch = v;
    }
    if let Some(v) = opts.lr {
        cfg.lr = v;
    }
    if let Some(v) = opts.schedule {
        cfg.schedule = match v {
            ScheduleArg::Auto => ScheduleChoice::Auto,
            ScheduleArg::Constant => ScheduleChoice::Constant,
            ScheduleArg::Multistep => ScheduleChoice::MultiStep,
        };
    }
    if let Some(v) = opts.lambda_m {
        cfg.lambda_m = v;
    }
    if let Some(v) = opts.margin {
        cfg.margin = match v {
            MarginArg::Batch => MarginMode::Batch,
            MarginArg::Dataset => MarginMode::Dataset,
            MarginArg::Off => MarginMode::Off,
        };
    }
    if opts.mask_k.is_some() || opts.mask_scope.is_some() || opts.mask_mode.is_some() {
        let base = cfg.mask.unwrap_or(MaskSpec::top(100.0));
        cfg.mask = Some(MaskSpec {
            k: opts.mask_k.unwrap_or(base.k),
            scope: match opts.mask_scope {
                Some(ScopeArg::PerSample) => MaskScope::PerSample,
                Some(ScopeArg::Global) => MaskScope::Global,
                None => base.scope,
            },
            mode: match opts.mask_mode {
                Some(ModeArg::RetainTop) => MaskMode::RetainTop,
                Some(ModeArg::RetainBottom) => MaskMode::RetainBottom,
                None => base.mode,
            },
        });
    }
    if opts.dropout_keep.is_some() || opts.dropout_site.is_some() {
        let base = cfg.dropout.unwrap_or(DropoutSpec {
            keep: 1.0,
            site: DropoutSite::Hidden,
        });
        cfg.dropout = Some(DropoutSpec {
            keep: opts.dropout_keep.unwrap_or(base.keep),
            site: opts.dropout_site.map(Into::into).unwrap_or(base.site),
        });
    }
    if opts.no_telemetry {
        cfg.telemetry = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execution(opts: &TrainOpts) -> Execution {
    if opts.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn train(opts: TrainOpts, json_mode: bool) -> Result<()> {
    let cfg = resolve_config(&opts)?;
    let ds = read_container(&opts.data)?;
    let exec = execution(&opts);
    let outcome = parallel::with_jobs(opts.jobs, || train_sweep(&cfg, &ds, exec))?;
    let dir = &opts.out_dir;
    fs::create_dir_all(dir).map_err(|e| IqaError::io(dir, e))?;
    let report = &outcome.report;
    write_text(&dir.join("report.json"), &report.to_json())?;
    write_text(&dir.join("report.csv"), &report.to_csv())?;
    for (seed, model) in &outcome.models {
        write_checkpoint(
            model,
            json!({"seed": seed, "dataset": ds.name(), "config_hash": report.config_hash}),
            dir.join(format!("checkpoint-seed{seed}.iqae")),
        )?;
    }
    write_manifest(
        &dir.join("manifest.json"),
        "train",
        json!({"data": opts.data, "config": cfg, "execution": exec}),
    )?;
    emit(
        json_mode,
        json!({"out_dir": dir, "srcc": report.srcc, "plcc": report.plcc, "failures": report.failures}),
        || {
            let mut s = String::new();
            for r in &report.runs {
                if let Some(b) = r.best {
                    s.push_str(&format!(
                        "seed {:>3}: best epoch {:>2}  SRCC {:.4}  PLCC {:.4}\n",
                        r.seed, b.epoch, b.srcc, b.plcc
                    ));
                }
            }
            if let (Some(sr), Some(pl)) = (report.srcc, report.plcc) {
                s.push_str(&format!(
                    "mean: SRCC {:.4} ± {:.4}  PLCC {:.4} ± {:.4}\n",
                    sr.mean, sr.std, pl.mean, pl.std
                ));
            }
            for f in &report.failures {
                s.push_str(&format!("seed {} failed: {}\n", f.seed, f.error));
            }
            s.push_str(&format!("reports in {}", dir.display()));
            s
        },
    );
    // every seed aborting is a numerical failure of the whole run
    if report.runs.is_empty() {
        if let Some(f) = report.failures.first() {
            return Err(IqaError::Numerical {
                epoch: 0,
                batch: 0,
                reason: format!("all seeds failed; seed {}: {}", f.seed, f.error),
            });
        }
    }
    Ok(())
}

fn parse_combo(s: &str) -> Result<(ActivationKind, ActivationKind)> {
    let (a, b) = s
        .split_once('+')
        .ok_or_else(|| IqaError::Config(format!("combination `{s}` must look like act1+act2")))?;
    Ok((a.parse()?, b.parse()?))
}

fn sweep(a: SweepArgs, json_mode: bool) -> Result<()> {
    let opts = &a.opts;
    let cfg = resolve_config(opts)?;
    let ds = read_container(&opts.data)?;
    let exec = execution(opts);
    let ks = a.k.clone().unwrap_or_else(|| DEFAULT_K_GRID.to_vec());
    let dir = &opts.out_dir;
    fs::create_dir_all(dir).map_err(|e| IqaError::io(dir, e))?;

    let (name, csv, json_rows) = parallel::with_jobs(opts.jobs, || -> Result<_> {
        Ok(match a.kind {
            SweepKind::Seeds => {
                let out = train_sweep(&cfg, &ds, exec)?;
                (
                    "seeds",
                    out.report.to_csv(),
                    serde_json::to_value(&out.report).unwrap(),
                )
            }
            SweepKind::Mask => {
                let template = cfg.mask.unwrap_or(MaskSpec::top(100.0));
                let base = TrainConfig {
                    mask: None,
                    ..cfg.clone()
                };
                let rows = run_masking_sweep(&base, &ds, &ks, template, exec)?;
                (
                    "mask",
                    rows_to_csv(&rows)?,
                    serde_json::to_value(&rows).unwrap(),
                )
            }
            SweepKind::Dropout => {
                let sites: Vec<DropoutSite> = a
                    .sites
                    .clone()
                    .unwrap_or_else(|| vec![SiteArg::Hidden, SiteArg::Input])
                    .into_iter()
                    .map(Into::into)
                    .collect();
                let base = TrainConfig {
                    dropout: None,
                    ..cfg.clone()
                };
                let rows = run_dropout_sweep(&base, &ds, &ks, &sites, exec)?;
                (
                    "dropout",
                    rows_to_csv(&rows)?,
                    serde_json::to_value(&rows).unwrap(),
                )
            }
            SweepKind::Acts => {
                let combos = match &a.combos {
                    Some(list) => list
                        .iter()
                        .map(|s| parse_combo(s))
                        .collect::<Result<Vec<_>>>()?,
                    None => activation_grid_combos(),
                };
                let rows = run_activation_grid(&cfg, &ds, &combos, exec)?;
                (
                    "acts",
                    rows_to_csv(&rows)?,
                    serde_json::to_value(&rows).unwrap(),
                )
            }
        })
    })?;
    let payload = json!({"config_hash": cfg.hash(), "config": cfg, "rows": json_rows});
    write_text(&dir.join(format!("{name}.csv")), &csv)?;
    write_text(&dir.join(format!("{name}.json")), &to_pretty(&payload))?;
    write_manifest(
        &dir.join("manifest.json"),
        &format!("sweep {name}"),
        json!({"data": opts.data, "config": cfg, "k": ks, "execution": exec}),
    )?;
    emit(json_mode, payload, || csv.trim_end().to_string());
    Ok(())
}

fn cross_eval_cmd(a: CrossEvalArgs, json_mode: bool) -> Result<()> {
    let ck = read_checkpoint(&a.checkpoint)?;
    let ds = read_container(&a.data)?;
    let m = cross_eval(&ck.model, &ds)?;
    let value = json!({
        "checkpoint": a.checkpoint, "data": a.data, "dataset": ds.name(),
        "srcc": m.srcc, "plcc": m.plcc,
    });
    if let Some(out) = &a.out {
        write_text(out, &to_pretty(&value))?;
        write_manifest(&sidecar(out), "cross-eval", value.clone())?;
    }
    emit(json_mode, value, || {
        format!(
            "{} on {}: SRCC {:.4}  PLCC {:.4}",
            a.checkpoint.display(),
            ds.name(),
            m.srcc,
            m.plcc
        )
    });
    Ok(())
}

fn inspect(a: InspectArgs, json_mode: bool) -> Result<()> {
    let bytes = fs::read(&a.path).map_err(|e| IqaError::io(&a.path, e))?;
    if bytes.starts_with(crate::data::MAGIC) {
        let raw = read_raw(&a.path)?;
        let value = match raw.kind {
            SectionKind::Embeddings => {
                let ds = read_container(&a.path)?;
                let range = ds.labels.as_ref().map(|l| {
                    let lo = l.iter().copied().fold(Real::INFINITY, Real::min);
                    let hi = l.iter().copied().fold(Real::NEG_INFINITY, Real::max);
                    [lo, hi]
                });
                json!({
                    "kind": "embeddings", "n": raw.n, "d": raw.d,
                    "labels": raw.labels.is_some(), "label_range": range,
                    "checksum": format!("{:#018x}", raw.checksum), "metadata": {
                        "name": ds.provenance.name, "backbone": ds.provenance.backbone,
                        "normalization": ds.provenance.normalization,
                    },
                })
            }
            SectionKind::Parameters => {
                let ck = read_checkpoint(&a.path)?;
                json!({
                    "kind": "checkpoint", "params": raw.d, "head": ck.model.config(),
                    "checksum": format!("{:#018x}", raw.checksum), "extra": ck.extra,
                })
            }
        };
        emit(json_mode, value.clone(), || to_pretty(&value));
        return Ok(());
    }
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|_| IqaError::format(&a.path, "neither an IQAE container nor a JSON report"))?;
    let runs: Vec<&serde_json::Value> =
        if let Some(runs) = value.get("runs").and_then(|r| r.as_array()) {
            runs.iter().collect()
        } else if value.get("epochs").is_some() {
            vec![&value]
        } else {
            vec![]
        };
    if a.gates {
        let rows: Vec<serde_json::Value> = runs
            .iter()
            .flat_map(|r| {
                let seed = r.get("seed").cloned().unwrap_or_default();
                r.get("gate_telemetry")
                    .and_then(|g| g.as_array())
                    .cloned()
                    .unwrap_or_default()
                    .into_iter()
                    .map(move |mut g| {
                        g["seed"] = seed.clone();
                        g
                    })
            })
            .collect();
        let text = rows
            .iter()
            .map(|g| {
                format!(
                    "seed {} site {} after {:>2} epochs  mean {:.4}  counts {}",
                    g["seed"],
                    g["site"],
                    g["after_epochs"],
                    g["mean"].as_f64().unwrap_or(f64::NAN),
                    g["counts"]
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        emit(json_mode, json!(rows), || text);
        return Ok(());
    }
    let summary = json!({
        "kind": if runs.is_empty() { "json" } else { "report" },
        "config_hash": value.get("config_hash"),
        "runs": runs.iter().map(|r| json!({"seed": r["seed"], "best": r["best"]})).collect::<Vec<_>>(),
        "srcc": value.get("srcc"),
        "plcc": value.get("plcc"),
        "rows": value.get("rows").and_then(|r| r.as_array()).map(|r| r.len()),
    });
    emit(json_mode, summary.clone(), || to_pretty(&summary));
    Ok(())
}
