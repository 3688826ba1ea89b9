//! Counter-based random number streams.
//!
//! Every random draw in a run is produced by a short-lived ChaCha8 stream
//! addressed by `(iteration, phase, site)`.  A draw therefore depends only on
//! the run seed and its address, never on how many draws other sites made or
//! on which thread executed them.  This makes sweeps bit-identical across
//! thread counts and lets any single draw be replayed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which stage of a run is drawing.  The phase keeps streams from distinct
/// stages disjoint even when they share an iteration and site index.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
#[repr(u8)]
pub enum Phase {
    SceneGen = 0,
    MaskGen = 1,
    Simulate = 2,
    Init = 3,
    SweepU = 4,
    SweepW = 5,
    SweepX = 6,
}

/// Root key for one run, expanded from a 64-bit seed.
#[derive(Clone, Debug)]
pub struct ChainRng {
    key: [u8; 32],
}

// Fixed-increment mixer used only to expand the seed into a ChaCha key.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream identifier layout: iteration in the top 24 bits, phase in the next
/// 4, site index in the low 36.
const PHASE_SHIFT: u32 = 36;
const ITER_SHIFT: u32 = 40;
pub const MAX_ITERATION: u64 = 1 << (64 - ITER_SHIFT);
pub const MAX_SITE: u64 = 1 << PHASE_SHIFT;

impl ChainRng {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChainRng { key }
    }

    /// The stream for one `(iteration, phase, site)` address.
    pub fn stream(&self, iteration: u64, phase: Phase, site: u64) -> ChaCha8Rng {
        assert!(iteration < MAX_ITERATION, "iteration {iteration} exceeds stream capacity");
        assert!(site < MAX_SITE, "site index {site} exceeds stream capacity");
        let id = (iteration << ITER_SHIFT) | ((phase as u64) << PHASE_SHIFT) | site;
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(id);
        rng
    }
}
