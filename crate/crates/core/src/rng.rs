//! Counter-based random streams.
//!
//! Every random draw in a run comes from a stream addressed by
//! `(master seed, purpose, a, b)`, e.g. `(seed, Oracle, node, k)`. Streams are
//! independent of evaluation order, so parallel schedules reproduce sequential ones
//! bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Data,
    Replication,
    Oracle,
    Placement,
    Attack,
    Sampler,
    Certify,
    Probe,
    Lemma,
    Sweep,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Data => 0x01,
            Purpose::Replication => 0x02,
            Purpose::Oracle => 0x03,
            Purpose::Placement => 0x04,
            Purpose::Attack => 0x05,
            Purpose::Sampler => 0x06,
            Purpose::Certify => 0x07,
            Purpose::Probe => 0x08,
            Purpose::Lemma => 0x09,
            Purpose::Sweep => 0x0a,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, purpose: Purpose, a: u64, b: u64) -> u64 {
    let mut h = mix64(master);
    h = mix64(h ^ purpose.tag());
    h = mix64(h ^ a.wrapping_mul(0xd6e8_feb8_6659_fd93));
    mix64(h ^ b.wrapping_mul(0xa076_1d64_78bd_642f))
}

pub fn stream(master: u64, purpose: Purpose, a: u64, b: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, a, b))
}
