//! Deterministic random streams.
//!
//! Every independent unit of work (a repeat, a trajectory, a calibration
//! atom) draws from its own stream derived from `(master_seed, index)`, so
//! results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same index apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Repeat = 1,
    Trajectory = 2,
    Calibration = 3,
    Pnl = 4,
    Test = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn child_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream as u64)) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn child(master: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(child_seed(master, stream, index))
}
