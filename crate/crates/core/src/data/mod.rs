//! Embedding datasets: the IQAE container, MOS normalization, seeded splits
//! and synthetic data.

mod container;
mod dataset;
mod normalize;
mod split;
mod synth;

pub use container::{
    fnv1a64, read_checkpoint, read_container, read_raw, write_checkpoint, write_container,
    Checkpoint, RawContainer, SectionKind, CONTAINER_VERSION, MAGIC,
};
pub use dataset::{EmbeddingDataset, Provenance};
pub use normalize::{normalize_mos, DatasetKind, SizeClass};
pub use split::{epoch_seed, make_split, shuffled_indices, SplitMix64, SplitSpec, TRAIN_FRACTION};
pub use synth::{gen_synthetic, gen_synthetic_with, latent_scores, SignalLayout, SynthSpec};
