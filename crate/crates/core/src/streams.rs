//! Counter-based random substreams.
//!
//! Every consumer of randomness gets its own generator keyed by
//! `(seed, domain, index)`, so results never depend on how work is split
//! across threads or in which order it runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tag for the short-rate noise of a path.
pub const DOMAIN_RATES: u64 = 0x5241_5445_5f50_4154;
/// Domain tag for the prepayment uniforms of a path's loans.
pub const DOMAIN_PREPAYMENT: u64 = 0x5052_4550_4159_5f55;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for item `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut state = seed ^ domain.rotate_left(17);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
