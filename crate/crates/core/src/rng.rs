//! Counter-based RNG streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! root seed and a 64-bit stream id. Stream ids are a hash of a purpose tag
//! and the indices that identify the draw (vector index, trial, epoch...), so
//! results never depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the stream hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Centroid = 1,
    Sample = 2,
    Split = 3,
    Init = 4,
    Shuffle = 5,
    TrainChannel = 6,
    SnrPick = 7,
    EvalChannel = 8,
    Bench = 9,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a stream id from a purpose and an index path.
pub fn stream_id(purpose: Purpose, indices: &[u64]) -> u64 {
    let mut h = splitmix64(purpose as u64);
    for &i in indices {
        // The rotation keeps the fold order-sensitive; a plain xor would map
        // (purpose a, index b) and (purpose b, index a) to the same stream.
        h = splitmix64(h.rotate_left(29) ^ splitmix64(i));
    }
    h
}

/// Splits one stream id into independent children (e.g. gains vs noise).
pub fn substream(stream: u64, child: u64) -> u64 {
    splitmix64(stream.rotate_left(47) ^ splitmix64(!child))
}

/// Generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shorthand for `stream_rng(seed, stream_id(purpose, indices))`.
pub fn rng_for(seed: u64, purpose: Purpose, indices: &[u64]) -> ChaCha8Rng {
    stream_rng(seed, stream_id(purpose, indices))
}
