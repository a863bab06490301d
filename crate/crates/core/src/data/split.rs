//! Seeded train/validation splits.
//!
//! The shuffler is pinned so splits can be reproduced in any language:
//!
//! * generator: SplitMix64. `state += 0x9E3779B97F4A7C15`, then
//!   `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9`,
//!   `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`, output `z ^ (z >> 31)`
//!   (wrapping 64-bit arithmetic), initial state = seed.
//! * bounded draw in `[0, n)`: high 64 bits of the 128-bit product `next() * n`.
//! * Fisher-Yates over `0..N`: for `i = N-1` down to `1`, draw `j` in `[0, i]`,
//!   swap positions `i` and `j`.
//! * the first `floor(0.8 N)` shuffled indices are the training split.

use serde::{Deserialize, Serialize};

pub const TRAIN_FRACTION: f64 = 0.8;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;
const EPOCH_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(MIX1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX2);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Seed for the batch order of one epoch: the first SplitMix64 output from
/// state `seed ^ ((epoch + 1) * 0xD1B54A32D192ED03)`.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    SplitMix64::new(seed ^ (epoch as u64 + 1).wrapping_mul(EPOCH_STRIDE)).next_u64()
}

pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut idx);
    idx
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn make_split(n: usize, seed: u64) -> SplitSpec {
    let perm = shuffled_indices(n, seed);
    let n_train = n * 4 / 5;
    SplitSpec {
        seed,
        train: perm[..n_train].to_vec(),
        val: perm[n_train..].to_vec(),
    }
}
