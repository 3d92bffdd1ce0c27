//! Counter-keyed random substreams.
//!
//! A substream is a ChaCha8 generator whose key comes from the run seed and
//! whose 64-bit stream id is a hash of a key path such as
//! `(tag, model, bandwidth bits, replication)`. Draws therefore depend only
//! on the key path, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key path into a single stream id.
pub fn stream_id(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x6A09_E667_F3BC_C908u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// Generator for `(seed, keys...)`.
pub fn substream(seed: u64, keys: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(keys));
    rng
}
