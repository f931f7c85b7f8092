use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent RNG stream for `(seed, tag, index)`.
///
/// Every consumer that needs randomness per unit of work (a tree, a class,
/// a fold) derives its own stream here so results do not depend on the
/// order in which units are scheduled.
pub(crate) fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(seed ^ splitmix64(tag)) ^ index);
    ChaCha8Rng::seed_from_u64(s)
}

pub(crate) mod tags {
    pub const SPLIT: u64 = 1;
    pub const KFOLD: u64 = 2;
    pub const TREE: u64 = 3;
    pub const SYNTHETIC: u64 = 4;
    pub const MDS: u64 = 5;
}
