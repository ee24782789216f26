//! Derivation of independent sub-seeds from one master seed.
//!
//! Every random consumer in a run (data generation, the train/test split,
//! each tree of each forest, network initialisation, exploration) draws from
//! its own ChaCha stream. The stream seed is
//!
//! ```text
//! mix(mix(mix(master) ^ stream) ^ index)
//! ```
//!
//! where `mix` is the SplitMix64 finaliser, `stream` is one of the constants
//! in [`stream`] and `index` is a per-consumer counter (tree number, scenario
//! number, criterion number). Identical master seeds therefore reproduce an
//! entire experiment, and parallel consumers never share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers.
pub mod stream {
    pub const SYNTH: u64 = 0x5359_4e54;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const FOREST: u64 = 0x464f_5253;
    pub const TREE: u64 = 0x5452_4545;
    pub const FOLDS: u64 = 0x464f_4c44;
    pub const NETWORK: u64 = 0x4e45_5457;
    pub const AGENT: u64 = 0x4147_4e54;
    pub const SCENARIO: u64 = 0x5343_454e;
    pub const RANDOM_SEARCH: u64 = 0x5253_5243;
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ stream) ^ index)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> Rng {
    rng(derive(master, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_and_indices_separate() {
        let a = derive(7, stream::TREE, 0);
        assert_ne!(a, derive(7, stream::TREE, 1));
        assert_ne!(a, derive(7, stream::FOREST, 0));
        assert_ne!(a, derive(8, stream::TREE, 0));
        assert_eq!(a, derive(7, stream::TREE, 0));
    }
}
