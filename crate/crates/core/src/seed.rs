//! Deterministic fan-out of a master seed into per-component random streams.
//!
//! Every stochastic component (initial design, GP restarts, network
//! initialisation, acquisition base samples, decision-maker noise) draws from
//! its own stream, so any single component can be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract; do not renumber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    InitDesign = 1,
    InitPairs = 2,
    GpFit = 3,
    UtilityModel = 4,
    Acquisition = 5,
    DecisionMaker = 6,
    Metrics = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parent` with an index into an independent child seed.
pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Seed for `stream` at loop iteration `iteration`.
pub fn stream_seed(master: u64, stream: Stream, iteration: u64) -> u64 {
    derive(derive(master, stream as u64), iteration)
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
