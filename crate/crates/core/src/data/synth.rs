//! Seeded synthetic embedding datasets with a known latent quality score.
//!
//! Features are standard normal. Two projections `u` (norm about 2) and `v`
//! (norm about 1) are drawn from the same seed, and
//! `latent = sigmoid(u.x) + 0.2 * tanh(v.x)`, which lies in `(-0.2, 1.2)`,
//! is mapped to `[0, 1]` by `(latent + 0.2) / 1.4`. Labels add Gaussian noise
//! of the requested level and are clipped to `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activations::sigmoid;
use crate::data::dataset::EmbeddingDataset;
use crate::error::{IqaError, Result};
use crate::kernel::{dot, Matrix, Real};

const U_NORM: f64 = 2.0;
const V_NORM: f64 = 1.0;
const TANH_WEIGHT: f64 = 0.2;
/// Magnitude band of informative features in [`SignalLayout::TopDecile`].
const STRONG_LO: f64 = 4.0;
const STRONG_HI: f64 = 6.0;

/// Which features carry the signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalLayout {
    /// Every feature contributes through dense projections.
    #[default]
    Dense,
    /// The first `ceil(d/10)` features have magnitudes in `[4, 6]`, always the
    /// largest in the sample, and are the only ones the score depends on.
    TopDecile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub noise: f64,
    #[serde(default)]
    pub layout: SignalLayout,
}

pub fn gen_synthetic(n: usize, d: usize, seed: u64, noise: f64) -> Result<EmbeddingDataset> {
    gen_synthetic_with(&SynthSpec {
        n,
        d,
        seed,
        noise,
        layout: SignalLayout::Dense,
    })
}

pub fn gen_synthetic_with(spec: &SynthSpec) -> Result<EmbeddingDataset> {
    let SynthSpec {
        n,
        d,
        seed,
        noise,
        layout,
    } = *spec;
    if n == 0 || d == 0 {
        return Err(IqaError::Config(format!(
            "synthetic dataset needs n, d >= 1 (got {n}, {d})"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(IqaError::Config(format!(
            "noise level must be >= 0, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = match layout {
        SignalLayout::Dense => d,
        SignalLayout::TopDecile => d.div_ceil(10),
    };
    // typical |x| of an informative feature, so that u.x has std about U_NORM
    let feature_scale = match layout {
        SignalLayout::Dense => 1.0,
        SignalLayout::TopDecile => 0.5 * (STRONG_LO + STRONG_HI),
    };
    let mut projection = |norm: f64| -> Vec<Real> {
        let mut p = vec![0.0; d];
        for w in p.iter_mut().take(active) {
            let z: f64 = rng.sample(StandardNormal);
            *w = (z * norm / ((active as f64).sqrt() * feature_scale)) as Real;
        }
        p
    };
    let u = projection(U_NORM);
    let v = projection(V_NORM);

    let mut features = Matrix::zeros(n, d);
    for r in 0..n {
        let row = features.row_mut(r);
        for (c, x) in row.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *x = if c < active && layout == SignalLayout::TopDecile {
                let mag = rng.gen_range(STRONG_LO..STRONG_HI);
                (mag * z.signum()) as Real
            } else {
                z as Real
            };
        }
    }

    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let x = features.row(r);
        let latent = sigmoid(dot(&u, x)) as f64 + TANH_WEIGHT * (dot(&v, x) as f64).tanh();
        let clean = (latent + TANH_WEIGHT) / (1.0 + 2.0 * TANH_WEIGHT);
        let z: f64 = rng.sample(StandardNormal);
        labels.push((clean + noise * z).clamp(0.0, 1.0) as Real);
    }

    let mut ds = EmbeddingDataset::new(format!("synthetic-{seed}"), features, Some(labels), None)?;
    ds.provenance.backbone = Some("synthetic".into());
    ds.provenance.recipe = Some(serde_json::to_string(spec).unwrap_or_default());
    ds.provenance.normalization = Some("identity".into());
    Ok(ds)
}

/// Noise-free latent score of each row for the given spec (test oracle helper).
pub fn latent_scores(spec: &SynthSpec) -> Result<Vec<Real>> {
    let clean = gen_synthetic_with(&SynthSpec {
        noise: 0.0,
        ..spec.clone()
    })?;
    Ok(clean.labels.unwrap_or_default())
}
