//! The IQAE binary container.
//!
//! ```text
//! offset  size       field
//! 0       4          magic "IQAE"
//! 4       4          u32 version (1)
//! 8       4          u32 N
//! 12      4          u32 d
//! 16      1          u8 label flag (0 or 1)
//! 17      3          reserved; byte 17 is the section kind (0 embeddings, 1 parameters)
//! 20      4*N*d      features, f32 LE, row-major      | parameters: 8*d bytes of f64 LE (N = 1)
//! ..      4*N        labels, f32 LE (if flagged)
//! ..      8          u64 LE FNV-1a over every preceding byte
//! ..      4          u32 LE byte length L of the JSON trailer
//! ..      L          UTF-8 JSON metadata
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::{EmbeddingDataset, Provenance};
use crate::error::{IqaError, Result};
use crate::head::{HeadConfig, HeadModel};
use crate::kernel::{Matrix, Real};

pub const MAGIC: &[u8; 4] = b"IQAE";
pub const CONTAINER_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectionKind {
    Embeddings,
    Parameters,
}

impl SectionKind {
    fn code(self) -> u8 {
        match self {
            SectionKind::Embeddings => 0,
            SectionKind::Parameters => 1,
        }
    }
}

/// A container decoded without interpreting its payload.
#[derive(Debug, Clone, PartialEq)]
pub struct RawContainer {
    pub kind: SectionKind,
    pub n: usize,
    pub d: usize,
    /// Embedding features (f32) or parameters (f64), widened to f64.
    pub values: Vec<f64>,
    pub labels: Option<Vec<f32>>,
    pub checksum: u64,
    pub metadata: serde_json::Value,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn to_u32(path: &Path, what: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| IqaError::format(path, format!("{what} {v} does not fit in u32")))
}

fn encode(
    path: &Path,
    kind: SectionKind,
    n: usize,
    d: usize,
    write_payload: impl FnOnce(&mut Vec<u8>),
    labels: Option<&[Real]>,
    metadata: &serde_json::Value,
) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * n * d + 4 * n + 64);
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, CONTAINER_VERSION);
    put_u32(&mut buf, to_u32(path, "N", n)?);
    put_u32(&mut buf, to_u32(path, "d", d)?);
    buf.push(labels.is_some() as u8);
    buf.extend_from_slice(&[kind.code(), 0, 0]);
    write_payload(&mut buf);
    if let Some(labels) = labels {
        for &l in labels {
            buf.extend_from_slice(&(l as f32).to_le_bytes());
        }
    }
    let checksum = fnv1a64(&buf);
    buf.extend_from_slice(&checksum.to_le_bytes());
    let json = serde_json::to_vec(metadata)
        .map_err(|e| IqaError::format(path, format!("metadata serialization: {e}")))?;
    put_u32(&mut buf, to_u32(path, "metadata length", json.len())?);
    buf.extend_from_slice(&json);
    Ok(buf)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| IqaError::io(path, e))
}

/// Decodes and validates a container held in memory.
pub fn decode(path: &Path, bytes: &[u8]) -> Result<RawContainer> {
    let fail = |reason: String| IqaError::format(path, reason);
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!(
            "file too short for header ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(fail(format!("bad magic {:?}", &bytes[..4])));
    }
    let word = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = word(4);
    if version != CONTAINER_VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let (n, d) = (word(8) as usize, word(12) as usize);
    if n == 0 || d == 0 {
        return Err(fail(format!("degenerate shape N={n}, d={d}")));
    }
    let has_labels = match bytes[16] {
        0 => false,
        1 => true,
        f => return Err(fail(format!("invalid label flag {f}"))),
    };
    let kind = match bytes[17] {
        0 => SectionKind::Embeddings,
        1 => SectionKind::Parameters,
        k => return Err(fail(format!("unknown section kind {k}"))),
    };
    let elem = match kind {
        SectionKind::Embeddings => 4u64,
        SectionKind::Parameters => 8u64,
    };
    let payload = (n as u64) * (d as u64) * elem + if has_labels { 4 * n as u64 } else { 0 };
    let body_end = HEADER_LEN as u64 + payload;
    if body_end + 12 > bytes.len() as u64 {
        return Err(fail(format!(
            "truncated payload: declared N*d needs {} bytes, file has {}",
            body_end + 12,
            bytes.len()
        )));
    }
    let body_end = body_end as usize;
    let stored = u64::from_le_bytes(bytes[body_end..body_end + 8].try_into().unwrap());
    let computed = fnv1a64(&bytes[..body_end]);
    if stored != computed {
        return Err(fail(format!(
            "checksum mismatch: stored {stored:#018x}, computed {computed:#018x}"
        )));
    }
    let meta_len = word(body_end + 8) as usize;
    let meta_start = body_end + 12;
    if meta_start + meta_len != bytes.len() {
        return Err(fail(format!(
            "metadata trailer declares {meta_len} bytes, {} present",
            bytes.len() - meta_start
        )));
    }
    let metadata: serde_json::Value = serde_json::from_slice(&bytes[meta_start..])
        .map_err(|e| fail(format!("metadata trailer is not valid JSON: {e}")))?;

    let values_end = HEADER_LEN + n * d * elem as usize;
    let values: Vec<f64> = match kind {
        SectionKind::Embeddings => bytes[HEADER_LEN..values_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        SectionKind::Parameters => bytes[HEADER_LEN..values_end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let labels = has_labels.then(|| {
        bytes[values_end..body_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    });
    Ok(RawContainer {
        kind,
        n,
        d,
        values,
        labels,
        checksum: stored,
        metadata,
    })
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<RawContainer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| IqaError::io(path, e))?;
    decode(path, &bytes)
}

pub fn encode_dataset(path: &Path, ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    ds.validate()
        .map_err(|e| IqaError::format(path, format!("refusing to write invalid dataset: {e}")))?;
    let mut provenance = ds.provenance.clone();
    provenance.ids = Some(ds.ids.clone());
    let metadata =
        serde_json::to_value(&provenance).map_err(|e| IqaError::format(path, e.to_string()))?;
    encode(
        path,
        SectionKind::Embeddings,
        ds.len(),
        ds.dim(),
        |buf| {
            for &v in ds.features.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        },
        ds.labels.as_deref(),
        &metadata,
    )
}

pub fn write_container(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &encode_dataset(path, ds)?)
}

pub fn read_container(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    if raw.kind != SectionKind::Embeddings {
        return Err(IqaError::format(
            path,
            "expected an embedding container, found a checkpoint",
        ));
    }
    let mut provenance: Provenance = serde_json::from_value(raw.metadata)
        .map_err(|e| IqaError::format(path, format!("bad provenance metadata: {e}")))?;
    let ids = provenance.ids.take();
    let features = Matrix::from_vec(
        raw.n,
        raw.d,
        raw.values.iter().map(|&v| v as Real).collect(),
    )?;
    let labels = raw
        .labels
        .map(|l| l.into_iter().map(|v| v as Real).collect());
    let mut ds = EmbeddingDataset::new(provenance.name.clone(), features, labels, ids)
        .map_err(|e| IqaError::format(path, e.to_string()))?;
    ds.provenance = provenance;
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    head: HeadConfig,
    layout: Vec<(String, usize)>,
    #[serde(default)]
    extra: serde_json::Value,
}

/// A trained head together with free-form run metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: HeadModel,
    pub extra: serde_json::Value,
}

pub fn write_checkpoint(
    model: &HeadModel,
    extra: serde_json::Value,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut model = model.clone();
    let layout = model
        .param_layout()
        .into_iter()
        .map(|(n, l)| (n.to_string(), l))
        .collect();
    let params = model.param_vector();
    let meta = CheckpointMeta {
        kind: "checkpoint".into(),
        head: model.config().clone(),
        layout,
        extra,
    };
    let metadata =
        serde_json::to_value(&meta).map_err(|e| IqaError::format(path, e.to_string()))?;
    let bytes = encode(
        path,
        SectionKind::Parameters,
        1,
        params.len(),
        |buf| {
            for &p in &params {
                buf.extend_from_slice(&(p as f64).to_le_bytes());
            }
        },
        None,
        &metadata,
    )?;
    write_bytes(path, &bytes)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let raw = read_raw(path)?;
    if raw.kind != SectionKind::Parameters {
        return Err(IqaError::format(
            path,
            "expected a checkpoint, found an embedding container",
        ));
    }
    let meta: CheckpointMeta = serde_json::from_value(raw.metadata)
        .map_err(|e| IqaError::format(path, format!("bad checkpoint metadata: {e}")))?;
    let mut model =
        HeadModel::build(meta.head.clone()).map_err(|e| IqaError::format(path, e.to_string()))?;
    let layout: Vec<(String, usize)> = model
        .param_layout()
        .into_iter()
        .map(|(n, l)| (n.to_string(), l))
        .collect();
    if layout != meta.layout {
        return Err(IqaError::format(
            path,
            "parameter layout does not match head config",
        ));
    }
    let values: Vec<Real> = raw.values.iter().map(|&v| v as Real).collect();
    model
        .set_param_vector(&values)
        .map_err(|e| IqaError::format(path, e.to_string()))?;
    Ok(Checkpoint {
        model,
        extra: meta.extra,
    })
}
