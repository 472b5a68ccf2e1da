//! Deterministic seed derivation.
//!
//! Every stage of a run draws from its own named stream derived from one root
//! seed. This keeps ablation arms aligned: two runs that share a root seed
//! consume identical noise/minibatch/condition streams even when one arm
//! additionally draws selectivity thresholds from its own stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over the label bytes, folded into the root seed.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix-style finalize so adjacent roots do not produce adjacent streams
    let mut z = root ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A seeded stream for one named concern of one run.
pub fn stream(root: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, label))
}
