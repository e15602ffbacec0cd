//! Deterministic random-stream derivation.
//!
//! Every replicate draws from its own ChaCha8 stream, derived from the
//! master seed by a fixed rule: the cipher key is `master_seed` and the
//! stream id is
//!
//! ```text
//! stream = (experiment_tag << 48) | (sub_experiment << 32) | replicate
//! ```
//!
//! Streams are never reused across replicates or experiments, and results
//! are collected by replicate index, so outputs do not depend on the number
//! of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

// Experiment tags. Distinct per experiment so that adding replicates to one
// never perturbs another.
pub const TAG_SIMULATE: u16 = 1;
pub const TAG_CONVERGE: u16 = 2;
pub const TAG_CONVERGE_SDE: u16 = 3;
pub const TAG_VERIFY: u16 = 4;
pub const TAG_MOMENTS: u16 = 5;
pub const TAG_ADJUDICATE: u16 = 6;
pub const TAG_ADJUDICATE_SDE: u16 = 7;
pub const TAG_TOY: u16 = 8;
pub const TAG_ALL_OR_NOTHING: u16 = 9;
pub const TAG_PILOT: u16 = 99;

/// The unique random stream for `(master_seed, tag, sub, replicate)`.
pub fn replicate_rng(master_seed: u64, tag: u16, sub: u16, replicate: u32) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((tag as u64) << 48) | ((sub as u64) << 32) | replicate as u64);
    rng
}
