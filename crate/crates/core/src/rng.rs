//! Seed derivation. Every random stream in the pipeline is a ChaCha8 generator
//! whose seed is derived from the user seed plus a domain tag and an index, so
//! streams never overlap and any single stream can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PipelineRng = ChaCha8Rng;

/// Domain tags for [`derive_seed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Epoch = 3,
    Query = 4,
    GradCheck = 5,
    Synth = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream as u64) ^ index)
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> PipelineRng {
    PipelineRng::seed_from_u64(derive_seed(seed, stream, index))
}
