//! Seed derivation for independent random streams.
//!
//! A run is driven by one master seed. Policy randomness, feedback noise, and
//! data generation each get their own sub-stream so that, for example,
//! changing the policy seed offset leaves the feedback noise sequence intact.

/// Stream tag for the policy RNG.
pub const STREAM_POLICY: u64 = 1;
/// Stream tag for the feedback RNG.
pub const STREAM_FEEDBACK: u64 = 2;
/// Stream tag for schedule shuffling.
pub const STREAM_SCHEDULE: u64 = 3;

/// SplitMix64 finalizer; a cheap, well-mixed 64-bit permutation.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives the seed for one named sub-stream of `master`.
///
/// Distinct `stream` tags give statistically unrelated seeds; the same
/// `(master, stream)` pair always gives the same seed.
pub fn sub_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}
