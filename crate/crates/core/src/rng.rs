//! Counter-based random streams.
//!
//! Every replication owns three independent ChaCha8 streams derived from the
//! experiment seed and its replication index, so results never depend on
//! which worker ran the replication.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamPurpose {
    /// Covariate generation and arrival order.
    Covariates = 0,
    /// Outcome noise.
    Outcomes = 1,
    /// Design randomness, consumed in this order within a trial: pair
    /// orientation draws, biased-coin draws, cross-validation shuffles.
    Design = 2,
}

const PURPOSES: u64 = 4;

/// Stream `(seed, rep, purpose)`.
pub fn stream(seed: u64, rep: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}
