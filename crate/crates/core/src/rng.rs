use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a named sub-stream of a run seed, so adding a
/// user or a component does not shift every other stream.
pub(crate) fn stream(seed: u64, salt: &str) -> ChaCha8Rng {
    // FNV-1a over the salt, folded into the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in salt.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h.rotate_left(17))
}
