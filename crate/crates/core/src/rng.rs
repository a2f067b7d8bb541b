//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator keyed by
//! `(seed, tag)` and positioned on stream `index`. Sample `i` of a dataset
//! uses stream `i`, so results do not depend on generation order or on how
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Rng = ChaCha20Rng;

/// Well-known tags. Any `u64` works; these keep the crate's own uses apart.
pub mod tags {
    pub const WORLD: u64 = 0x776f_726c_64;
    pub const TRAIN: u64 = 0x7472_6169_6e;
    pub const TEST: u64 = 0x7465_7374;
    pub const SHUFFLE: u64 = 0x7368_7566;
    pub const INIT: u64 = 0x696e_6974;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic generator for `(seed, tag, index)`.
pub fn substream(seed: u64, tag: u64, index: u64) -> Rng {
    let key = splitmix64(seed ^ splitmix64(tag));
    let mut rng = ChaCha20Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Stable 64-bit tag for a string label (FNV-1a).
pub fn tag_of(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
