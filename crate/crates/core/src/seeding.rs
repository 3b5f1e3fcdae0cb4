//! Seeded random streams. Independent work items (molecules, conformers)
//! each get their own ChaCha stream derived from a base seed and an index,
//! so results do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Two-level derivation, e.g. `(molecule, conformer)`.
pub fn substream(seed: u64, outer: u64, inner: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ outer.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(inner);
    rng
}
