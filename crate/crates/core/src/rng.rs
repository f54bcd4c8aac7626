//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream derived from one
//! master seed and a stream label, so independent consumers never share state.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as Rng;

/// Stream for a named consumer (`"train"`, `"eval"`, `"sim"`, ...).
pub fn substream(master: u64, name: &str) -> Rng {
    let mut rng = Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Stream for item `index` of a named family, e.g. one per trajectory.
pub fn indexed(master: u64, name: &str, index: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(fnv1a(name.as_bytes()).wrapping_add(index));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
