//! Seeded, order-independent random streams.
//!
//! Every trial draws from a ChaCha8 stream keyed by `(master_seed, domain,
//! slot)` with the trial index as the stream id, so a trial's randomness does
//! not depend on which thread ran it or on how many trials ran before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// Independent key spaces for the different consumers of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Evaluation = 1,
    Tuning = 2,
    Diagnostics = 3,
    Concentration = 4,
    Cli = 5,
}

/// Plain generator from a single seed.
pub fn from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for one trial. `slot` separates grid points (or any other
/// sub-experiment) sharing a domain.
pub fn trial_stream(master_seed: u64, domain: Domain, slot: u64, trial_index: u64) -> TrialRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&slot.to_le_bytes());
    key[24..].copy_from_slice(b"wlasso\0\0");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trial_index);
    rng
}
